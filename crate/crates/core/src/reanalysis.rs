//! Approximate reanalysis with a held factorization.
//!
//! A [`ReanalysisContext`] owns a factorization of `K₀` and a current matrix
//! `K_cur = K₀ + ΔK`. The ICA sequence
//!
//! ```text
//! s̃ = K₀⁻¹ b,   s⁽⁰⁾ = s̃,   s⁽ᵏ⁺¹⁾ = s̃ − K₀⁻¹ (ΔK s⁽ᵏ⁾)
//! ```
//!
//! approximates `K_cur⁻¹ b` and converges linearly at rate `‖B‖` with
//! `B = K₀⁻¹ ΔK`. `ΔK` is applied matrix-free as `K_cur − K₀`.

use nalgebra::{DMatrix, DVector};

use crate::sparse::{delta_apply, LdltFactor, SparseSym, SymbolicLdlt};
use crate::{Error, Result};
use std::sync::Arc;

/// Default cap on ICA iterations.
pub const ICA_MAX_ITERATIONS: usize = 10;
/// Relative residual tolerance for Newton steps.
pub const EPS_NEWTON: f64 = 1e-2;
/// Relative residual tolerance for adjoint solves.
pub const EPS_ADJOINT: f64 = 1e-8;

/// When the held factorization was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FactorStamp {
    pub outer: usize,
    pub newton: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    /// Newton iterations since the start of the run.
    pub global_newton: usize,
    /// Newton iterations since `ΔK` was last refreshed.
    pub since_refresh: usize,
    /// Outer iterations since the last factorization.
    pub outer_since_factor: usize,
    pub factorizations: usize,
    pub fallbacks: usize,
}

#[derive(Debug)]
pub struct ReanalysisContext {
    symbolic: Arc<SymbolicLdlt>,
    factor: Option<LdltFactor>,
    k0: Option<SparseSym>,
    k_cur: Option<SparseSym>,
    stamp: FactorStamp,
    pub counters: Counters,
}

/// Outcome of an ICA solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IcaReport {
    /// Index `k*` of the returned iterate.
    pub iterations: usize,
    /// Relative residual `‖K_cur s − b‖∞ / ‖b‖∞` of the returned iterate.
    pub residual: f64,
    pub converged: bool,
    /// The tolerance was missed and the solve needed (or took) the exact path.
    pub fallback: bool,
}

impl ReanalysisContext {
    pub fn new(symbolic: Arc<SymbolicLdlt>) -> Self {
        ReanalysisContext {
            symbolic,
            factor: None,
            k0: None,
            k_cur: None,
            stamp: FactorStamp::default(),
            counters: Counters::default(),
        }
    }

    /// Factors `k` and makes it both `K₀` and `K_cur`, so `ΔK = 0`.
    pub fn install(&mut self, k: SparseSym, stamp: FactorStamp) -> Result<()> {
        let factor = self.symbolic.factor(&k)?;
        self.factor = Some(factor);
        self.k0 = Some(k.clone());
        self.k_cur = Some(k);
        self.stamp = stamp;
        self.counters.factorizations += 1;
        self.counters.since_refresh = 0;
        self.counters.outer_since_factor = 0;
        Ok(())
    }

    /// Replaces `K_cur`, refreshing `ΔK = K_cur − K₀`.
    pub fn set_current(&mut self, k: SparseSym) -> Result<()> {
        let k0 = self.k0.as_ref().ok_or_else(|| Error::invalid("no factorization held"))?;
        if !k0.same_pattern(&k) {
            return Err(Error::invalid("current matrix pattern differs from the factored matrix"));
        }
        self.k_cur = Some(k);
        self.counters.since_refresh = 0;
        Ok(())
    }

    pub fn has_factor(&self) -> bool {
        self.factor.is_some()
    }

    pub fn stamp(&self) -> FactorStamp {
        self.stamp
    }

    pub fn symbolic(&self) -> &Arc<SymbolicLdlt> {
        &self.symbolic
    }

    fn parts(&self) -> Result<(&LdltFactor, &SparseSym, &SparseSym)> {
        match (&self.factor, &self.k0, &self.k_cur) {
            (Some(f), Some(k0), Some(kc)) => Ok((f, k0, kc)),
            _ => Err(Error::invalid("no factorization held")),
        }
    }

    pub fn k0(&self) -> Option<&SparseSym> {
        self.k0.as_ref()
    }

    pub fn k_current(&self) -> Option<&SparseSym> {
        self.k_cur.as_ref()
    }

    /// `K₀⁻¹ b` with the held factorization.
    pub fn solve_k0(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.parts()?.0.solve(b)
    }

    /// `B v = K₀⁻¹ (ΔK v)` for a given current matrix.
    fn apply_b_with(&self, k: &SparseSym, v: &[f64]) -> Result<Vec<f64>> {
        let (f, k0, _) = self.parts()?;
        f.solve(&delta_apply(k, k0, v)?)
    }

    /// `Bᵀ w = ΔK (K₀⁻¹ w)`, using the symmetry of `K₀` and `ΔK`.
    fn apply_bt_with(&self, k: &SparseSym, w: &[f64]) -> Result<Vec<f64>> {
        let (f, k0, _) = self.parts()?;
        delta_apply(k, k0, &f.solve(w)?)
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn relative_residual(k: &SparseSym, s: &[f64], b: &[f64], b_norm: f64) -> f64 {
    let ks = k.mul_vec(s);
    ks.iter().zip(b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / b_norm
}

/// The ICA iterates `s⁽⁰⁾, …, s⁽ᵏ⁾` for `K_cur s = b`.
pub fn ica_sequence(ctx: &ReanalysisContext, b: &[f64], k: usize) -> Result<Vec<Vec<f64>>> {
    let (f, _, kc) = ctx.parts()?;
    let s_tilde = f.solve(b)?;
    let mut out = vec![s_tilde.clone()];
    for _ in 0..k {
        let bs = ctx.apply_b_with(kc, out.last().unwrap())?;
        out.push(s_tilde.iter().zip(&bs).map(|(a, c)| a - c).collect());
    }
    Ok(out)
}

/// Solves `K_cur s = b` with the ICA sequence, returning the first iterate
/// with relative residual below `eps`, or the best of `k_max + 1` iterates
/// with `converged = false`.
pub fn ica_solve(ctx: &ReanalysisContext, b: &[f64], eps: f64, k_max: usize) -> Result<(Vec<f64>, IcaReport)> {
    let (f, _, kc) = ctx.parts()?;
    if b.len() != kc.dim() {
        return Err(Error::invalid(format!("right-hand side of length {} for dimension {}", b.len(), kc.dim())));
    }
    let b_norm = norm_inf(b);
    if b_norm == 0.0 {
        let report = IcaReport { iterations: 0, residual: 0.0, converged: true, fallback: false };
        return Ok((vec![0.0; b.len()], report));
    }
    let s_tilde = f.solve(b)?;
    let mut s = s_tilde.clone();
    let mut best: Option<(Vec<f64>, IcaReport)> = None;
    for k in 0..=k_max {
        let residual = relative_residual(kc, &s, b, b_norm);
        if residual < eps {
            return Ok((s, IcaReport { iterations: k, residual, converged: true, fallback: false }));
        }
        if best.as_ref().is_none_or(|(_, r)| residual < r.residual) {
            best = Some((s.clone(), IcaReport { iterations: k, residual, converged: false, fallback: true }));
        }
        if k == k_max {
            break;
        }
        let bs = ctx.apply_b_with(kc, &s)?;
        s = s_tilde.iter().zip(&bs).map(|(a, c)| a - c).collect();
    }
    Ok(best.expect("at least one iterate"))
}

/// Solves the adjoint system `K_cur λ = −l`. When ICA misses `eps` within
/// `k_max` iterations, `K_cur` is factored and installed, and the system is
/// solved exactly.
pub fn ica_adjoint_solve(ctx: &mut ReanalysisContext, l: &[f64], eps: f64, k_max: usize) -> Result<(Vec<f64>, IcaReport)> {
    let rhs: Vec<f64> = l.iter().map(|v| -v).collect();
    let (lambda, report) = ica_solve(ctx, &rhs, eps, k_max)?;
    if report.converged {
        return Ok((lambda, report));
    }
    let k = ctx.k_cur.clone().expect("checked by ica_solve");
    let stamp = ctx.stamp;
    ctx.install(k, stamp)?;
    ctx.counters.fallbacks += 1;
    let lambda = ctx.solve_k0(&rhs)?;
    let residual = relative_residual(ctx.k_cur.as_ref().unwrap(), &lambda, &rhs, norm_inf(&rhs));
    Ok((lambda, IcaReport { iterations: report.iterations, residual, converged: true, fallback: true }))
}

/// Combined approximations: the best combination of the first `q` ICA
/// iterates in the sense of the reduced system `S_Bᵀ K_cur S_B y = S_Bᵀ b`.
/// Rank-deficient bases are truncated, down to `s̃` alone.
pub fn ca_solve(ctx: &ReanalysisContext, b: &[f64], q: usize) -> Result<Vec<f64>> {
    if q == 0 {
        return Err(Error::invalid("CA basis needs at least one vector"));
    }
    let (_, _, kc) = ctx.parts()?;
    let basis = ica_sequence(ctx, b, q - 1)?;
    let n = b.len();
    let kb: Vec<Vec<f64>> = basis.iter().map(|s| kc.mul_vec(s)).collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, c)| a * c).sum::<f64>();
    for m in (1..=q).rev() {
        let a = DMatrix::from_fn(m, m, |i, j| dot(&basis[i], &kb[j]));
        let rhs = DVector::from_fn(m, |i, _| dot(&basis[i], b));
        let svd = a.clone().svd(false, false);
        let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
        if m > 1 && !(smin > 1e-12 * smax) {
            continue;
        }
        if m == 1 && !(smax > 0.0) {
            return Ok(basis[0].clone());
        }
        let Some(y) = a.lu().solve(&rhs) else { continue };
        let mut s = vec![0.0; n];
        for (i, v) in basis.iter().enumerate().take(m) {
            for (acc, x) in s.iter_mut().zip(v) {
                *acc += y[i] * x;
            }
        }
        return Ok(s);
    }
    Ok(basis[0].clone())
}

/// Estimate of `‖B‖₂` for `B = K₀⁻¹ (k − K₀)`.
///
/// Runs `iterations` steps of the power iteration on `BᵀB`, keeping every
/// iterate: the largest Ritz value over the Krylov space they span (Lanczos
/// with full reorthogonalization) converges much faster than the last iterate
/// alone when the top singular values are clustered.
pub fn estimate_norm_b_with(ctx: &ReanalysisContext, k: &SparseSym, iterations: usize) -> Result<f64> {
    let n = k.dim();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut q: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    let nq = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= nq);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    for _ in 0..iterations.max(1).min(n.max(1)) {
        let bq = ctx.apply_b_with(k, &q)?;
        let mut w = ctx.apply_bt_with(k, &bq)?;
        alpha.push(dot(&bq, &bq));
        basis.push(q);
        // Two passes of Gram-Schmidt keep the basis orthogonal to roundoff.
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
            }
        }
        let b = dot(&w, &w).sqrt();
        let scale = alpha.iter().fold(0.0, |m: f64, a| m.max(a.abs()));
        if !(b > 1e-12 * scale) {
            break;
        }
        beta.push(b);
        q = w.into_iter().map(|x| x / b).collect();
    }
    let m = alpha.len();
    let t = nalgebra::DMatrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
        0 => alpha[i],
        1 => beta[i.min(j)],
        _ => 0.0,
    });
    let top = t.symmetric_eigenvalues().max();
    Ok(top.max(0.0).sqrt())
}

/// Power-iteration estimate of `‖B‖₂` for the context's current `ΔK`.
pub fn estimate_norm_b(ctx: &ReanalysisContext, iterations: usize) -> Result<f64> {
    let (_, _, kc) = ctx.parts()?;
    estimate_norm_b_with(ctx, kc, iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{Ordering, SymPattern};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_pattern(n: usize) -> Arc<SymPattern> {
        Arc::new(SymPattern::from_coords(n, (0..n).flat_map(|j| (j..n).map(move |i| (i, j))), None).unwrap())
    }

    fn sparse(pattern: &Arc<SymPattern>, m: &DMatrix<f64>) -> SparseSym {
        let mut s = SparseSym::zeros(Arc::clone(pattern));
        let (cp, ri) = (pattern.col_ptr().to_vec(), pattern.row_idx().to_vec());
        for j in 0..pattern.dim() {
            for p in cp[j]..cp[j + 1] {
                s.values_mut()[p] = m[(ri[p], j)];
            }
        }
        s
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * n as f64
    }

    fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    fn context(k0: &DMatrix<f64>, k_cur: &DMatrix<f64>) -> ReanalysisContext {
        let pat = full_pattern(k0.nrows());
        let mut ctx = ReanalysisContext::new(SymbolicLdlt::analyze(Arc::clone(&pat), Ordering::Amd).unwrap());
        ctx.install(sparse(&pat, k0), FactorStamp::default()).unwrap();
        ctx.set_current(sparse(&pat, k_cur)).unwrap();
        ctx
    }

    fn dense_norm_b(k0: &DMatrix<f64>, k_cur: &DMatrix<f64>) -> f64 {
        let b = k0.clone().lu().solve(&(k_cur - k0)).unwrap();
        b.singular_values().max()
    }

    #[test]
    fn zero_delta_returns_exact_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k0 = random_spd(30, &mut rng);
        let ctx = context(&k0, &k0);
        let b: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (s, rep) = ica_solve(&ctx, &b, EPS_NEWTON, 10).unwrap();
        assert!(rep.converged && rep.iterations == 0 && rep.residual < 1e-12);
        assert_eq!(s, ctx.solve_k0(&b).unwrap());
        assert!(estimate_norm_b(&ctx, 50).unwrap() == 0.0);
        assert_eq!(ca_solve(&ctx, &b, 3).unwrap(), s);
    }

    #[test]
    fn zero_rhs_is_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k0 = random_spd(10, &mut rng);
        let mut ctx = context(&k0, &(&k0 * 1.1));
        let (s, rep) = ica_solve(&ctx, &[0.0; 10], EPS_NEWTON, 10).unwrap();
        assert!(s.iter().all(|&v| v == 0.0) && rep.converged && rep.residual == 0.0);
        let (l, rep) = ica_adjoint_solve(&mut ctx, &[0.0; 10], EPS_ADJOINT, 10).unwrap();
        assert!(l.iter().all(|&v| v == 0.0) && rep.converged);
    }

    #[test]
    fn iterates_contract_towards_dense_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let k0 = random_spd(n, &mut rng);
        let k_cur = &k0 + random_sym(n, &mut rng) * 3.0;
        let nb = dense_norm_b(&k0, &k_cur);
        assert!(nb < 1.0, "instance has ‖B‖ = {nb}");
        let ctx = context(&k0, &k_cur);
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let exact = k_cur.clone().lu().solve(&b).unwrap();
        let seq = ica_sequence(&ctx, b.as_slice(), 10).unwrap();
        let err = |s: &Vec<f64>| (DVector::from_column_slice(s) - &exact).norm();
        for w in seq.windows(2) {
            assert!(err(&w[1]) <= (nb + 1e-10) * err(&w[0]));
        }
        let (s, rep) = ica_solve(&ctx, b.as_slice(), EPS_NEWTON, 10).unwrap();
        assert!(rep.converged && rep.residual < EPS_NEWTON);
        assert_eq!(s, seq[rep.iterations]);
    }

    #[test]
    fn divergent_case_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k0 = random_spd(30, &mut rng);
        let k_cur = &k0 + &k0 * 1.5;
        let ctx = context(&k0, &k_cur);
        assert!((estimate_norm_b(&ctx, 50).unwrap() - 1.5).abs() < 1e-10);
        let b: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, rep) = ica_solve(&ctx, &b, EPS_NEWTON, 10).unwrap();
        assert!(!rep.converged && rep.fallback);
    }

    #[test]
    fn adjoint_reaches_tight_tolerance_or_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 30;
        let k0 = random_spd(n, &mut rng);
        let k_cur = &k0 + random_sym(n, &mut rng) * 0.5;
        let l = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let exact = -k_cur.clone().lu().solve(&l).unwrap();
        let mut ctx = context(&k0, &k_cur);
        let (lam, rep) = ica_adjoint_solve(&mut ctx, l.as_slice(), EPS_ADJOINT, 10).unwrap();
        assert!(rep.converged && !rep.fallback && rep.residual < EPS_ADJOINT);
        assert!((DVector::from_column_slice(&lam) - &exact).amax() <= 1e-6 * exact.amax());
        // A newton-level tolerance passes earlier than the adjoint one.
        let rhs: Vec<f64> = l.iter().map(|v| -v).collect();
        let (_, loose) = ica_solve(&ctx, &rhs, EPS_NEWTON, 10).unwrap();
        assert!(loose.iterations < rep.iterations);

        let k_far = &k0 * 3.0;
        let mut ctx = context(&k0, &k_far);
        let (lam, rep) = ica_adjoint_solve(&mut ctx, l.as_slice(), EPS_ADJOINT, 10).unwrap();
        assert!(rep.fallback && ctx.counters.factorizations == 2 && ctx.counters.fallbacks == 1);
        let exact = -k_far.clone().lu().solve(&l).unwrap();
        assert!((DVector::from_column_slice(&lam) - &exact).amax() <= 1e-10 * exact.amax());
    }

    #[test]
    fn ca_single_vector_and_full_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 30;
        let k0 = random_spd(n, &mut rng);
        let k_cur = &k0 + random_sym(n, &mut rng) * 3.0;
        let ctx = context(&k0, &k_cur);
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let exact = k_cur.clone().lu().solve(&b).unwrap();
        let energy_err = |s: &[f64]| {
            let e = DVector::from_column_slice(s) - &exact;
            (e.transpose() * &k_cur * &e)[0]
        };
        let s1 = ca_solve(&ctx, b.as_slice(), 1).unwrap();
        let tilde = ctx.solve_k0(b.as_slice()).unwrap();
        assert!(energy_err(&s1) <= energy_err(&tilde) * (1.0 + 1e-12));

        let n = 4;
        let k0 = random_spd(n, &mut rng);
        let k_cur = &k0 + random_sym(n, &mut rng) * 2.0;
        let ctx = context(&k0, &k_cur);
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let exact = k_cur.clone().lu().solve(&b).unwrap();
        let s = ca_solve(&ctx, b.as_slice(), n).unwrap();
        assert!((DVector::from_column_slice(&s) - &exact).amax() <= 1e-10 * exact.amax());
    }

    #[test]
    fn norm_estimate_matches_dense_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let n = 30;
            let k0 = random_spd(n, &mut rng);
            let k_cur = &k0 + random_sym(n, &mut rng) * 4.0;
            let ctx = context(&k0, &k_cur);
            let est = estimate_norm_b(&ctx, 50).unwrap();
            let exact = dense_norm_b(&k0, &k_cur);
            assert!((est - exact).abs() <= 0.01 * exact, "{est} vs {exact}");
        }
        let k0 = random_spd(30, &mut rng);
        let ctx = context(&k0, &(&k0 * 1.25));
        assert!((estimate_norm_b(&ctx, 50).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn install_resets_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k0 = random_spd(6, &mut rng);
        let pat = full_pattern(6);
        let mut ctx = ReanalysisContext::new(SymbolicLdlt::analyze(Arc::clone(&pat), Ordering::Natural).unwrap());
        assert!(ica_solve(&ctx, &[1.0; 6], 1e-2, 10).is_err());
        ctx.install(sparse(&pat, &k0), FactorStamp { outer: 2, newton: 9 }).unwrap();
        assert_eq!(ctx.stamp(), FactorStamp { outer: 2, newton: 9 });
        assert_eq!(ctx.k0(), ctx.k_current());
        assert_eq!(ctx.counters.factorizations, 1);
        assert!(ctx.set_current(SparseSym::from_dense(2, &[1.0, 0.0, 0.0, 1.0]).unwrap()).is_err());
    }
}
