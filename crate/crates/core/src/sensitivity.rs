//! Adjoint sensitivities of `F(ρ) = lᵀu(ρ)`.
//!
//! With `λ` solving `K̂_T λ = −l` at the converged state `û`, the gradient is
//! `∂F/∂ρₑ = λₑᵀ ∂r/∂ρₑ`. Strategies with the "g" suffix solve the adjoint
//! system by ICA against the held factorization; the others factor `K̂_T`.

use serde::{Deserialize, Serialize};

use crate::assembly::{Assembler, DensityField, Kinematics};
use crate::history::{timed, Timings};
use crate::nonlinear::Strategy;
use crate::reanalysis::{ica_adjoint_solve, FactorStamp, IcaReport, ReanalysisContext, EPS_ADJOINT, ICA_MAX_ITERATIONS};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjointMethod {
    Direct,
    Ica,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution {
    pub lambda: Vec<f64>,
    pub method: AdjointMethod,
    /// `‖K̂_T λ + l‖∞ / ‖l‖∞`.
    pub residual: f64,
    pub report: Option<IcaReport>,
    /// Factorizations performed by this solve.
    pub factorizations: usize,
}

fn relative_residual(k: &crate::sparse::SparseSym, lambda: &[f64], l: &[f64]) -> f64 {
    let kl = k.mul_vec(lambda);
    let num = kl.iter().zip(l).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
    let den = l.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Solves `K̂_T λ = −l` at the converged state `u_hat`.
pub fn solve_adjoint(
    asm: &Assembler,
    density: &DensityField,
    u_hat: &[f64],
    strategy: Strategy,
    ctx: &mut ReanalysisContext,
    outer: usize,
    timings: &mut Timings,
) -> Result<AdjointSolution> {
    let l = asm.output();
    let rhs: Vec<f64> = l.iter().map(|v| -v).collect();
    let before = ctx.counters.factorizations;
    let k_hat = timed(&mut timings.k_t, || asm.tangent(density, u_hat))?;
    let stamp = FactorStamp { outer, newton: ctx.counters.global_newton };

    if asm.kinematics() == Kinematics::Linear {
        // The equilibrium solve factored K(ρ); reuse it when it is current.
        if ctx.k0() != Some(&k_hat) {
            timed(&mut timings.factorizations, || ctx.install(k_hat.clone(), stamp))?;
        }
        let lambda = timed(&mut timings.linear_systems, || ctx.solve_k0(&rhs))?;
        let residual = relative_residual(&k_hat, &lambda, l);
        let factorizations = ctx.counters.factorizations - before;
        return Ok(AdjointSolution { lambda, method: AdjointMethod::Direct, residual, report: None, factorizations });
    }

    if strategy.flags().adjoint_uses_ica {
        if !ctx.has_factor() {
            timed(&mut timings.factorizations, || ctx.install(k_hat.clone(), stamp))?;
        } else {
            ctx.set_current(k_hat.clone())?;
        }
        let (lambda, report) = {
            let mut slot = 0.0;
            let out = timed(&mut slot, || ica_adjoint_solve(ctx, l, EPS_ADJOINT, ICA_MAX_ITERATIONS));
            timings.linear_systems += slot;
            out?
        };
        let residual = relative_residual(&k_hat, &lambda, l);
        let factorizations = ctx.counters.factorizations - before;
        Ok(AdjointSolution { lambda, method: AdjointMethod::Ica, residual, report: Some(report), factorizations })
    } else {
        let factor = timed(&mut timings.factorizations, || ctx.symbolic().factor(&k_hat))?;
        ctx.counters.factorizations += 1;
        let lambda = timed(&mut timings.linear_systems, || factor.solve(&rhs))?;
        let residual = relative_residual(&k_hat, &lambda, l);
        Ok(AdjointSolution { lambda, method: AdjointMethod::Direct, residual, report: None, factorizations: 1 })
    }
}

/// `∂F/∂ρₑ = λₑᵀ (p ρₑᵖ⁻¹ ∫ Gᵀσ)` for every element.
pub fn objective_gradient(asm: &Assembler, density: &DensityField, u_hat: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
    asm.adjoint_products(density, u_hat, lambda)
}
