//! Newton's method with Armijo backtracking for `r(u, ρ) = 0`, with the
//! factorization policy selected by a [`Strategy`].
//!
//! Each Newton iteration either factors a fresh tangent, or reuses the held
//! factorization through ICA against a refreshed or a stale `ΔK`. A reuse step
//! that misses its tolerance, or that is not a descent direction for
//! `‖r‖₂²`, falls back to an exact step with a fresh factorization. So does
//! the step after a reuse step that barely reduced `‖r‖₂`; a reuse step with
//! a stale `ΔK` that made only modest progress refreshes `ΔK` for the next.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assembly::{Assembler, DensityField, Kinematics};
use crate::history::{timed, Timings};
use crate::reanalysis::{estimate_norm_b_with, ica_solve, FactorStamp, ReanalysisContext, EPS_NEWTON, ICA_MAX_ITERATIONS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    N,
    MN,
    #[serde(rename = "upK1")]
    UpK1,
    #[serde(rename = "upK1g")]
    UpK1g,
    #[serde(rename = "upK100")]
    UpK100,
    #[serde(rename = "upK100g")]
    UpK100g,
    #[serde(rename = "upK03K100g")]
    UpK03K100g,
}

/// Behavior implied by a strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategyFlags {
    pub refactor_every_newton_iter: bool,
    /// Outer-iteration period of the factorization at the first Newton
    /// iteration of a solve.
    pub refactor_every_k_outer: usize,
    /// Newton-iteration period of `ΔK` refreshes; `None` keeps `ΔK = 0`.
    pub delta_refresh_period: Option<usize>,
    pub adjoint_uses_ica: bool,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::N,
        Strategy::MN,
        Strategy::UpK1,
        Strategy::UpK1g,
        Strategy::UpK100,
        Strategy::UpK100g,
        Strategy::UpK03K100g,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::N => "N",
            Strategy::MN => "MN",
            Strategy::UpK1 => "upK1",
            Strategy::UpK1g => "upK1g",
            Strategy::UpK100 => "upK100",
            Strategy::UpK100g => "upK100g",
            Strategy::UpK03K100g => "upK03K100g",
        }
    }

    pub fn flags(self) -> StrategyFlags {
        let (every_iter, k_outer, period, g) = match self {
            Strategy::N => (true, 1, Some(1), false),
            Strategy::MN => (false, 1, None, false),
            Strategy::UpK1 => (false, 1, Some(1), false),
            Strategy::UpK1g => (false, 1, Some(1), true),
            Strategy::UpK100 => (false, 1, Some(100), false),
            Strategy::UpK100g => (false, 1, Some(100), true),
            Strategy::UpK03K100g => (false, 3, Some(100), true),
        };
        StrategyFlags {
            refactor_every_newton_iter: every_iter,
            refactor_every_k_outer: k_outer,
            delta_refresh_period: period,
            adjoint_uses_ica: g,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown strategy '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Refactor,
    ReuseFreshDelta,
    ReuseHeldDelta,
}

/// Policy with a configurable refresh period for the 100-iteration rule.
pub fn decide_action_with_period(
    strategy: Strategy,
    outer: usize,
    iter_in_call: usize,
    global_counter: usize,
    period: usize,
) -> Action {
    let flags = strategy.flags();
    if flags.refactor_every_newton_iter {
        return Action::Refactor;
    }
    if iter_in_call == 0 && outer.is_multiple_of(flags.refactor_every_k_outer) {
        return Action::Refactor;
    }
    match flags.delta_refresh_period {
        None => Action::ReuseHeldDelta,
        Some(1) => Action::ReuseFreshDelta,
        Some(_) if global_counter.is_multiple_of(period.max(1)) => Action::ReuseFreshDelta,
        Some(_) => Action::ReuseHeldDelta,
    }
}

/// Step policy of `strategy` for a Newton iteration.
pub fn decide_action(strategy: Strategy, outer: usize, iter_in_call: usize, global_counter: usize) -> Action {
    decide_action_with_period(strategy, outer, iter_in_call, global_counter, 100)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub ica_tolerance: f64,
    pub ica_max_iterations: usize,
    pub armijo_c1: f64,
    pub max_backtracks: usize,
    pub refresh_period: usize,
    /// Outer iterations `0..forced_full_newton` use full Newton.
    pub forced_full_newton: usize,
    pub monitor_norm_b: bool,
    pub norm_b_iterations: usize,
    /// A step taken with a held `ΔK` that reduces `‖r‖₂` by less than this
    /// factor makes the next step refresh `ΔK`. `None` follows the policy
    /// strictly.
    pub stagnation_ratio: Option<f64>,
    /// A step taken with the held factorization that reduces `‖r‖₂` by less
    /// than this factor is treated like a failed ICA solve: the next step
    /// refactors, counted as a fallback. `None` disables the check.
    pub stall_ratio: Option<f64>,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tolerance: 1e-5,
            max_iterations: 50,
            ica_tolerance: EPS_NEWTON,
            ica_max_iterations: ICA_MAX_ITERATIONS,
            armijo_c1: 1e-4,
            max_backtracks: 20,
            refresh_period: 100,
            forced_full_newton: 5,
            monitor_norm_b: false,
            norm_b_iterations: 50,
            stagnation_ratio: Some(0.25),
            stall_ratio: Some(0.9),
        }
    }
}

impl NewtonConfig {
    /// Action actually taken, including the forced full-Newton phase and the
    /// linear mode, where every solve is a single exact step.
    pub fn effective_action(
        &self,
        strategy: Strategy,
        kinematics: Kinematics,
        outer: usize,
        iter_in_call: usize,
        global_counter: usize,
    ) -> Action {
        if kinematics == Kinematics::Linear || outer < self.forced_full_newton {
            Action::Refactor
        } else {
            decide_action_with_period(strategy, outer, iter_in_call, global_counter, self.refresh_period)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonStats {
    pub iterations: usize,
    pub factorizations: usize,
    /// ICA iterations of each reuse step.
    pub ica_iterations: Vec<usize>,
    pub backtracks: usize,
    pub residual: f64,
    pub fallbacks: usize,
    pub actions: Vec<Action>,
    /// Largest `‖B‖₂` estimate seen, when monitoring.
    pub max_norm_b: Option<f64>,
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Step {
    s: Vec<f64>,
    exact: bool,
}

/// Solves `r(u, ρ) = 0` from `u0`.
#[allow(clippy::too_many_arguments)]
pub fn newton_solve(
    asm: &Assembler,
    density: &DensityField,
    u0: &[f64],
    strategy: Strategy,
    ctx: &mut ReanalysisContext,
    outer: usize,
    config: &NewtonConfig,
    timings: &mut Timings,
) -> Result<(Vec<f64>, NewtonStats)> {
    let mut stats = NewtonStats::default();
    let mut u = u0.to_vec();
    let mut r = match timed(&mut timings.rhs, || asm.residual(density, &u)) {
        Ok(r) => r,
        Err(e) if e.is_nonpositive_jacobian() => {
            u = vec![0.0; asm.n_free()];
            timed(&mut timings.rhs, || asm.residual(density, &u))?
        }
        Err(e) => return Err(e),
    };
    let factorizations_before = ctx.counters.factorizations;
    let mut merit = dot(&r, &r);
    let mut stagnated = false;
    let mut stalled = false;
    for it in 0..=config.max_iterations {
        stats.residual = norm_inf(&r);
        if stats.residual <= config.tolerance {
            stats.iterations = it;
            stats.factorizations = ctx.counters.factorizations - factorizations_before;
            return Ok((u, stats));
        }
        if it == config.max_iterations {
            break;
        }
        let counter = ctx.counters.global_newton;
        let mut action = config.effective_action(strategy, asm.kinematics(), outer, it, counter);
        if stagnated && action == Action::ReuseHeldDelta && strategy.flags().delta_refresh_period.is_some() {
            action = Action::ReuseFreshDelta;
        }
        let stall_refactor = stalled && action != Action::Refactor;
        stats.actions.push(action);
        ctx.counters.global_newton += 1;
        let stamp = FactorStamp { outer, newton: counter };
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();

        let exact_step = |ctx: &mut ReanalysisContext, timings: &mut Timings, k| -> Result<Step> {
            let k = match k {
                Some(k) => k,
                None => timed(&mut timings.k_t, || asm.tangent(density, &u))?,
            };
            timed(&mut timings.factorizations, || ctx.install(k, stamp))?;
            let s = timed(&mut timings.linear_systems, || ctx.solve_k0(&rhs))?;
            Ok(Step { s, exact: true })
        };
        let fallback = |ctx: &mut ReanalysisContext, timings: &mut Timings, stats: &mut NewtonStats| {
            stats.fallbacks += 1;
            ctx.counters.fallbacks += 1;
            exact_step(ctx, timings, None)
        };

        let mut step = match action {
            _ if stall_refactor => fallback(ctx, timings, &mut stats)?,
            Action::Refactor => exact_step(ctx, timings, None)?,
            Action::ReuseFreshDelta | Action::ReuseHeldDelta if !ctx.has_factor() => fallback(ctx, timings, &mut stats)?,
            Action::ReuseFreshDelta | Action::ReuseHeldDelta => {
                if action == Action::ReuseFreshDelta {
                    let k = timed(&mut timings.k_t, || asm.tangent(density, &u))?;
                    ctx.set_current(k)?;
                } else {
                    ctx.counters.since_refresh += 1;
                }
                let (s, report) = timed(&mut timings.linear_systems, || {
                    ica_solve(ctx, &rhs, config.ica_tolerance, config.ica_max_iterations)
                })?;
                stats.ica_iterations.push(report.iterations);
                if report.converged {
                    Step { s, exact: false }
                } else {
                    fallback(ctx, timings, &mut stats)?
                }
            }
        };

        if config.monitor_norm_b && ctx.has_factor() {
            let k_true = asm.tangent(density, &u)?;
            let est = estimate_norm_b_with(ctx, &k_true, config.norm_b_iterations)?;
            stats.max_norm_b = Some(stats.max_norm_b.map_or(est, |m: f64| m.max(est)));
        }

        loop {
            let k_cur = ctx.k_current().expect("a factorization is held after a step");
            let slope = 2.0 * dot(&r, &k_cur.mul_vec(&step.s));
            let accepted = if slope < 0.0 {
                armijo(asm, density, &u, &step.s, merit, slope, config, timings, &mut stats)
            } else {
                None
            };
            match accepted {
                Some((u_new, r_new, m_new)) => {
                    stalled = !step.exact && config.stall_ratio.is_some_and(|q| m_new > q * q * merit);
                    stagnated = action == Action::ReuseHeldDelta
                        && config.stagnation_ratio.is_some_and(|eta| m_new > eta * eta * merit);
                    u = u_new;
                    r = r_new;
                    merit = m_new;
                    break;
                }
                None if !step.exact => step = fallback(ctx, timings, &mut stats)?,
                None => {
                    return Err(Error::NewtonNonConvergence { iterations: it + 1, residual: norm_inf(&r) });
                }
            }
        }
    }
    Err(Error::NewtonNonConvergence { iterations: config.max_iterations, residual: norm_inf(&r) })
}

/// Backtracking on `‖r‖₂²` with `α ∈ {1, ½, …}`. States with an inverted
/// element count as rejections.
#[allow(clippy::too_many_arguments)]
fn armijo(
    asm: &Assembler,
    density: &DensityField,
    u: &[f64],
    s: &[f64],
    merit: f64,
    slope: f64,
    config: &NewtonConfig,
    timings: &mut Timings,
    stats: &mut NewtonStats,
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let mut alpha = 1.0;
    for b in 0..=config.max_backtracks {
        let trial: Vec<f64> = u.iter().zip(s).map(|(x, d)| x + alpha * d).collect();
        if let Ok(r) = timed(&mut timings.rhs, || asm.residual(density, &trial)) {
            let m = dot(&r, &r);
            if m <= merit + config.armijo_c1 * alpha * slope {
                stats.backtracks += b;
                return Some((trial, r, m));
            }
        }
        alpha *= 0.5;
    }
    stats.backtracks += config.max_backtracks + 1;
    None
}

/// Factorizations implied by the policy for a run whose equilibrium solves
/// took `newton_iterations[k]` iterations at outer iteration `k`, assuming no
/// fallbacks. Non-"g" strategies add one factorization per adjoint solve,
/// except in linear mode where the adjoint reuses the equilibrium factor.
pub fn predicted_factorizations(
    strategy: Strategy,
    kinematics: Kinematics,
    config: &NewtonConfig,
    newton_iterations: &[usize],
    adjoint_solves: usize,
) -> usize {
    let mut counter = 0;
    let mut total = 0;
    for (outer, &n) in newton_iterations.iter().enumerate() {
        for it in 0..n {
            if config.effective_action(strategy, kinematics, outer, it, counter) == Action::Refactor {
                total += 1;
            }
            counter += 1;
        }
    }
    if kinematics == Kinematics::Nonlinear && !strategy.flags().adjoint_uses_ica {
        total += adjoint_solves;
    }
    total
}
