//! Per-iteration records of an optimization run and wall-clock accounting.

use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Wall-clock seconds per category.
///
/// `objective`, `gradient`, `subproblem`, `filtering` and `other` partition
/// `total`. `k_t`, `rhs`, `factorizations` and `linear_systems` break down
/// the numerical work of both the equilibrium and the adjoint solves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total: f64,
    pub objective: f64,
    pub k_t: f64,
    pub rhs: f64,
    pub factorizations: f64,
    pub linear_systems: f64,
    pub gradient: f64,
    pub subproblem: f64,
    pub filtering: f64,
    pub other: f64,
}

impl Timings {
    /// Row names and values in report order.
    pub fn rows(&self) -> [(&'static str, f64); 10] {
        [
            ("Total", self.total),
            ("F(rho)", self.objective),
            ("K_T", self.k_t),
            ("RHS", self.rhs),
            ("Factorizations", self.factorizations),
            ("Linear systems", self.linear_systems),
            ("Grad F", self.gradient),
            ("Subproblem solving", self.subproblem),
            ("Filtering", self.filtering),
            ("Other", self.other),
        ]
    }

    pub fn accumulate(&mut self, other: &Timings) {
        self.total += other.total;
        self.objective += other.objective;
        self.k_t += other.k_t;
        self.rhs += other.rhs;
        self.factorizations += other.factorizations;
        self.linear_systems += other.linear_systems;
        self.gradient += other.gradient;
        self.subproblem += other.subproblem;
        self.filtering += other.filtering;
        self.other += other.other;
    }

    /// Sets `other` to whatever `total` leaves unattributed.
    pub fn close(&mut self) {
        self.other = (self.total - self.objective - self.gradient - self.subproblem - self.filtering).max(0.0);
    }
}

/// Runs `f` and adds its wall-clock time to `slot`.
pub fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed().as_secs_f64();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub outer: usize,
    pub objective: f64,
    pub penalty: f64,
    pub volume: f64,
    /// Smallest and largest design variable.
    pub design_min: f64,
    pub design_max: f64,
    pub newton_iterations: usize,
    pub factorizations: usize,
    pub ica_iterations: usize,
    pub fallbacks: usize,
    pub backtracks: usize,
    pub residual: f64,
    pub gp_norm: f64,
    pub theta: f64,
    pub move_limit: f64,
    pub max_norm_b: Option<f64>,
    pub timings: Timings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Budget,
    Converged,
    NewtonFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub timings: Timings,
    /// Diagnostic of the failure that ended the run, if any.
    pub failure: Option<String>,
}

impl RunHistory {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.last().map(|r| r.objective)
    }

    pub fn total_newton_iterations(&self) -> usize {
        self.records.iter().map(|r| r.newton_iterations).sum()
    }

    pub fn total_factorizations(&self) -> usize {
        self.records.iter().map(|r| r.factorizations).sum()
    }

    pub fn total_fallbacks(&self) -> usize {
        self.records.iter().map(|r| r.fallbacks).sum()
    }
}
