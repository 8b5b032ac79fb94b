//! Sequential linear programming outer loop.
//!
//! Each iteration filters the design, solves the equilibrium equations,
//! computes the adjoint gradient and takes the exact minimizer of the
//! linearized objective over the volume hyperplane intersected with the box
//! and move limits. The SIMP exponent follows a continuation schedule and the
//! run stops on a budget or when the projected gradient of the Lagrangian
//! `F + θ V` falls below a tolerance.

use std::time::Instant;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::assembly::DensityField;
use crate::bench::ProblemSpec;
use crate::filter::{DensityFilter, FilterKernel};
use crate::history::{IterationRecord, RunHistory, Termination, Timings};
use crate::nonlinear::{newton_solve, NewtonConfig, NewtonStats, Strategy};
use crate::reanalysis::ReanalysisContext;
use crate::sensitivity::{objective_gradient, solve_adjoint};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Exactly this many design updates.
    Budget(usize),
    /// Stop when `‖g_P‖∞ < tolerance`, or after `max_iterations` updates.
    Converge { tolerance: f64, max_iterations: usize },
}

/// `p_k = min(max, initial + step·⌊k / every⌋)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    pub initial: f64,
    pub step: f64,
    pub every: usize,
    pub max: f64,
}

impl Default for Continuation {
    fn default() -> Self {
        Continuation { initial: 1.0, step: 0.1, every: 10, max: 3.0 }
    }
}

impl Continuation {
    pub fn penalty_at(&self, k: usize) -> f64 {
        let raised = k.checked_div(self.every).map_or(0.0, |q| q as f64);
        // Tenths are summed as integers so the cap is hit exactly.
        let tenths = (self.initial * 10.0).round() + (self.step * 10.0).round() * raised;
        let p = if ((self.initial * 10.0).round() - self.initial * 10.0).abs() < 1e-12
            && ((self.step * 10.0).round() - self.step * 10.0).abs() < 1e-12
        {
            tenths / 10.0
        } else {
            self.initial + self.step * raised
        };
        p.min(self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub mode: RunMode,
    /// Move limit `δ` on each design variable.
    pub move_limit: f64,
    /// Shrink the move limit of variables whose step changes sign.
    pub adaptive_move_limit: bool,
    pub continuation: Continuation,
    pub strategy: Strategy,
    pub newton: NewtonConfig,
    pub filter_kernel: FilterKernel,
    pub rho_min: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            mode: RunMode::Budget(100),
            move_limit: 0.05,
            adaptive_move_limit: true,
            continuation: Continuation::default(),
            strategy: Strategy::N,
            newton: NewtonConfig::default(),
            filter_kernel: FilterKernel::Cone,
            rho_min: 1e-3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return Err(Error::invalid(format!("move limit must lie in (0, 1], got {}", self.move_limit)));
        }
        if !(self.rho_min > 0.0 && self.rho_min < 1.0) {
            return Err(Error::invalid(format!("rho_min must lie in (0, 1), got {}", self.rho_min)));
        }
        if let RunMode::Converge { tolerance, .. } = self.mode {
            if !(tolerance > 0.0) {
                return Err(Error::invalid(format!("convergence tolerance must be positive, got {tolerance}")));
            }
        }
        let c = &self.continuation;
        if !(c.initial >= 1.0 && c.step >= 0.0 && c.max >= c.initial) {
            return Err(Error::invalid("continuation needs 1 <= initial <= max and a non-negative step"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    pub rho: Vec<f64>,
    /// Multiplier of the volume constraint.
    pub theta: f64,
}

/// Minimizes `gᵀ(x − ρ)` subject to `cᵀx = V*` and
/// `max(ρ_min, ρᵢ − δ) ≤ xᵢ ≤ min(1, ρᵢ + δ)`.
pub fn slp_subproblem(grad: &[f64], rho: &[f64], delta: f64, rho_min: f64, c: &[f64], v_star: f64) -> Result<SubproblemResult> {
    slp_subproblem_with_limits(grad, rho, &vec![delta; rho.len()], rho_min, c, v_star)
}

/// [`slp_subproblem`] with a move limit per variable.
///
/// Breakpoints `tᵢ = −gᵢ/cᵢ` are visited in decreasing order, raising each
/// variable from its lower to its upper bound. The group whose breakpoint
/// balances the volume gives `θ`; its members start at `xᵢ = ρᵢ` and absorb
/// the remaining volume in index order.
pub fn slp_subproblem_with_limits(
    grad: &[f64],
    rho: &[f64],
    delta: &[f64],
    rho_min: f64,
    c: &[f64],
    v_star: f64,
) -> Result<SubproblemResult> {
    let n = rho.len();
    if grad.len() != n || c.len() != n || delta.len() != n {
        return Err(Error::invalid("subproblem vectors have inconsistent lengths"));
    }
    if c.iter().any(|&ci| !(ci > 0.0)) {
        return Err(Error::invalid("volume weights must be positive"));
    }
    let lo: Vec<f64> = rho.iter().zip(delta).map(|(&r, &d)| (r - d).max(rho_min)).collect();
    let hi: Vec<f64> = rho.iter().zip(delta).map(|(&r, &d)| (r + d).min(1.0)).collect();
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return Err(Error::Infeasible("design lies outside the density bounds".into()));
    }
    let v_lo: f64 = c.iter().zip(&lo).map(|(a, b)| a * b).sum();
    let v_hi: f64 = c.iter().zip(&hi).map(|(a, b)| a * b).sum();
    let slack = 1e-12 * v_star.abs().max(v_hi);
    if v_star < v_lo - slack || v_star > v_hi + slack {
        return Err(Error::Infeasible(format!(
            "volume {v_star} outside the reachable range [{v_lo}, {v_hi}] of the move limits"
        )));
    }

    let t: Vec<f64> = grad.iter().zip(c).map(|(g, ci)| -g / ci).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| t[b].total_cmp(&t[a]).then(a.cmp(&b)));

    let mut x = lo.clone();
    let mut volume = v_lo;
    let mut theta = t.get(order.first().copied().unwrap_or(0)).copied().unwrap_or(0.0);
    let mut start = 0;
    while start < n {
        let tg = t[order[start]];
        let end = start + order[start..].iter().take_while(|&&i| t[i] == tg).count();
        let group = &order[start..end];
        let gain: f64 = group.iter().map(|&i| c[i] * (hi[i] - lo[i])).sum();
        if volume + gain >= v_star || end == n {
            theta = tg;
            let mut members = group.to_vec();
            members.sort_unstable();
            for &i in &members {
                volume += c[i] * (rho[i] - lo[i]);
                x[i] = rho[i];
            }
            let mut residual = v_star - volume;
            for &i in &members {
                if residual == 0.0 {
                    break;
                }
                let target = if residual > 0.0 { hi[i] } else { lo[i] };
                let room = c[i] * (target - x[i]);
                if room.abs() >= residual.abs() {
                    x[i] = (x[i] + residual / c[i]).clamp(lo[i], hi[i]);
                    residual = 0.0;
                } else {
                    x[i] = target;
                    residual -= room;
                }
            }
            break;
        }
        for &i in group {
            x[i] = hi[i];
        }
        volume += gain;
        start = end;
    }
    Ok(SubproblemResult { rho: x, theta })
}

/// `‖P_X(ρ − ∇𝓛) − ρ‖∞` with `∇𝓛 = g + θ c` and `X = [ρ_min, 1]ⁿ`.
pub fn projected_gradient_norm(rho: &[f64], grad: &[f64], theta: f64, c: &[f64], rho_min: f64) -> f64 {
    rho.iter()
        .zip(grad.iter().zip(c))
        .map(|(&r, (&g, &ci))| ((r - (g + theta * ci)).clamp(rho_min, 1.0) - r).abs())
        .fold(0.0, f64::max)
}

/// Final state of a run alongside its history.
#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub history: RunHistory,
    /// Design densities of the last evaluated iterate.
    pub design: Vec<f64>,
    /// Filtered densities of the last evaluated iterate.
    pub physical: Vec<f64>,
    /// Equilibrium displacements over free DOFs at the last iterate.
    pub displacements: Vec<f64>,
    pub target_volume: f64,
}

struct Evaluation {
    u: Vec<f64>,
    physical: Vec<f64>,
    objective: f64,
    stats: NewtonStats,
}

/// Runs the SLP loop on `problem`.
pub fn optimize(problem: &ProblemSpec, config: &OptimizerConfig) -> Result<OptimizationResult> {
    config.validate()?;
    let built = problem.build()?;
    let (mesh, asm) = (built.mesh, built.assembler);
    let filter = DensityFilter::build(&mesh, problem.filter_radius, config.filter_kernel)?;
    let volumes = mesh.element_volumes();
    let total_volume: f64 = volumes.iter().sum();
    let v_star = problem.target_volume();
    if !(v_star >= config.rho_min * total_volume && v_star <= total_volume) {
        return Err(Error::Infeasible(format!("target volume {v_star} outside [{}, {total_volume}]", config.rho_min * total_volume)));
    }
    // Volume of the physical densities as a function of the design.
    let c = filter.backpropagate(&volumes)?;
    let mut rho = vec![v_star / total_volume; mesh.n_elements()];
    let mut delta = vec![config.move_limit; rho.len()];
    let mut last_step = vec![0.0; rho.len()];
    let mut ctx = ReanalysisContext::new(asm.symbolic().clone());
    let mut u = vec![0.0; asm.n_free()];
    let (budget, tolerance) = match config.mode {
        RunMode::Budget(n) => (n, None),
        RunMode::Converge { tolerance, max_iterations } => (max_iterations, Some(tolerance)),
    };

    let mut history = RunHistory { records: Vec::new(), termination: Termination::Budget, timings: Timings::default(), failure: None };
    let mut previous: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    let mut last_physical = filter.apply(&rho)?;

    for k in 0..=budget {
        let started = Instant::now();
        let mut t = Timings::default();
        let penalty = config.continuation.penalty_at(k);
        let factorizations_before = ctx.counters.factorizations;
        let fallbacks_before = ctx.counters.fallbacks;

        let evaluate = |rho: &[f64], u0: &[f64], ctx: &mut ReanalysisContext, t: &mut Timings| -> Result<Evaluation> {
            let clock = Instant::now();
            // Row sums equal one only to rounding; keep the field inside the box.
            let physical: Vec<f64> = filter.apply(rho)?.into_iter().map(|x| x.clamp(config.rho_min, 1.0)).collect();
            t.filtering += clock.elapsed().as_secs_f64();
            let density = DensityField::new(physical.clone(), penalty, config.rho_min, volumes.clone())?;
            let clock = Instant::now();
            let solved = newton_solve(&asm, &density, u0, config.strategy, ctx, k, &config.newton, t);
            t.objective += clock.elapsed().as_secs_f64();
            let (u, stats) = solved?;
            let objective = asm.output().iter().zip(&u).map(|(a, b)| a * b).sum();
            Ok(Evaluation { u, physical, objective, stats })
        };

        let mut move_limit = config.move_limit;
        let eval = match evaluate(&rho, &u, &mut ctx, &mut t) {
            Ok(e) => e,
            Err(err) => {
                let Some((prev_rho, prev_grad, prev_u)) = previous.as_ref() else {
                    history.termination = Termination::NewtonFailure;
                    history.failure = Some(format!("outer iteration {k}: {err}"));
                    break;
                };
                warn!("outer iteration {k}: {err}; retrying with a halved move limit");
                move_limit *= 0.5;
                let halved: Vec<f64> = delta.iter().map(|d| d * 0.5).collect();
                let clock = Instant::now();
                let sub = slp_subproblem_with_limits(prev_grad, prev_rho, &halved, config.rho_min, &c, v_star)?;
                t.subproblem += clock.elapsed().as_secs_f64();
                for (s, (new, old)) in last_step.iter_mut().zip(sub.rho.iter().zip(prev_rho)) {
                    *s = new - old;
                }
                rho = sub.rho;
                u = prev_u.clone();
                match evaluate(&rho, &u, &mut ctx, &mut t) {
                    Ok(e) => e,
                    Err(err2) => {
                        history.termination = Termination::NewtonFailure;
                        history.failure = Some(format!("outer iteration {k}: {err}; retry failed: {err2}"));
                        break;
                    }
                }
            }
        };
        u = eval.u;
        last_physical = eval.physical.clone();

        let clock = Instant::now();
        let density = DensityField::new(eval.physical, penalty, config.rho_min, volumes.clone())?;
        let adjoint = solve_adjoint(&asm, &density, &u, config.strategy, &mut ctx, k, &mut t)?;
        let grad_phys = objective_gradient(&asm, &density, &u, &adjoint.lambda)?;
        t.gradient += clock.elapsed().as_secs_f64();
        let clock = Instant::now();
        let grad = filter.backpropagate(&grad_phys)?;
        t.filtering += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let sub = slp_subproblem_with_limits(&grad, &rho, &delta, config.rho_min, &c, v_star)?;
        t.subproblem += clock.elapsed().as_secs_f64();
        let gp_norm = projected_gradient_norm(&rho, &grad, sub.theta, &c, config.rho_min);

        t.total = started.elapsed().as_secs_f64();
        t.close();
        history.timings.accumulate(&t);
        let record = IterationRecord {
            outer: k,
            objective: eval.objective,
            penalty,
            volume: density.volume(),
            design_min: rho.iter().copied().fold(f64::INFINITY, f64::min),
            design_max: rho.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            newton_iterations: eval.stats.iterations,
            factorizations: ctx.counters.factorizations - factorizations_before,
            ica_iterations: eval.stats.ica_iterations.iter().sum::<usize>() + adjoint.report.map_or(0, |r| r.iterations),
            fallbacks: ctx.counters.fallbacks - fallbacks_before,
            backtracks: eval.stats.backtracks,
            residual: eval.stats.residual,
            gp_norm,
            theta: sub.theta,
            move_limit,
            max_norm_b: eval.stats.max_norm_b,
            timings: t,
        };
        debug!(
            "outer {k}: F = {:.6e}, p = {penalty:.1}, newton = {}, factorizations = {}, |gP| = {gp_norm:.3e}",
            record.objective, record.newton_iterations, record.factorizations
        );
        history.records.push(record);
        ctx.counters.outer_since_factor += 1;

        if tolerance.is_some_and(|tol| gp_norm < tol) {
            history.termination = Termination::Converged;
            break;
        }
        if k == budget {
            break;
        }
        if config.adaptive_move_limit {
            for i in 0..rho.len() {
                let step = sub.rho[i] - rho[i];
                delta[i] = if step * last_step[i] < 0.0 {
                    (delta[i] * 0.7).max(1e-3 * config.move_limit)
                } else {
                    (delta[i] * 1.2).min(config.move_limit)
                };
            }
        }
        for (s, (new, old)) in last_step.iter_mut().zip(sub.rho.iter().zip(&rho)) {
            *s = new - old;
        }
        previous = Some((rho.clone(), grad, u.clone()));
        rho = sub.rho;
    }

    info!(
        "{} on {}x{}: {} iterations, final F = {:?}, {:?}",
        config.strategy,
        problem.nx,
        problem.ny,
        history.records.len(),
        history.final_objective(),
        history.termination
    );
    Ok(OptimizationResult { history, design: rho, physical: last_physical, displacements: u, target_volume: v_star })
}
