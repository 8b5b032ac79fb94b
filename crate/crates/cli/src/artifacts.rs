//! Run artifacts: `report.json`, `history.csv`, `density.pgm` and the
//! optional `normB.csv`.

use std::fs;
use std::path::Path;

use ica_topopt::assembly::Kinematics;
use ica_topopt::bench::ProblemSpec;
use ica_topopt::history::{RunHistory, Termination, Timings};
use ica_topopt::optimizer::{optimize, OptimizationResult, OptimizerConfig};
use serde::{Deserialize, Serialize};

use crate::settings::Resolved;
use crate::{CliError, Result};

pub const REPORT: &str = "report.json";
pub const HISTORY: &str = "history.csv";
pub const DENSITY: &str = "density.pgm";
pub const NORM_B: &str = "normB.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub name: String,
    pub seconds: f64,
}

/// Summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub strategy: String,
    pub problem: String,
    pub mesh: [usize; 2],
    pub kinematics: Kinematics,
    pub termination: Termination,
    pub failure: Option<String>,
    pub initial_objective: Option<f64>,
    pub final_objective: Option<f64>,
    pub final_gp_norm: Option<f64>,
    pub outer_iterations: usize,
    pub newton_iterations: usize,
    pub factorizations: usize,
    pub ica_iterations: usize,
    pub fallbacks: usize,
    pub max_norm_b: Option<f64>,
    pub timings: Vec<TimingRow>,
    pub spec: ProblemSpec,
    pub config: OptimizerConfig,
}

pub fn timing_rows(t: &Timings) -> Vec<TimingRow> {
    t.rows().iter().map(|&(name, seconds)| TimingRow { name: name.to_string(), seconds }).collect()
}

impl Report {
    pub fn new(spec: &ProblemSpec, config: &OptimizerConfig, history: &RunHistory) -> Self {
        let rec = &history.records;
        Report {
            strategy: config.strategy.name().to_string(),
            problem: spec.kind.name().to_string(),
            mesh: [spec.nx, spec.ny],
            kinematics: spec.kinematics,
            termination: history.termination,
            failure: history.failure.clone(),
            initial_objective: rec.first().map(|r| r.objective),
            final_objective: history.final_objective(),
            final_gp_norm: history.last().map(|r| r.gp_norm),
            outer_iterations: rec.len().saturating_sub(1),
            newton_iterations: history.total_newton_iterations(),
            factorizations: history.total_factorizations(),
            ica_iterations: rec.iter().map(|r| r.ica_iterations).sum(),
            fallbacks: history.total_fallbacks(),
            max_norm_b: rec.iter().filter_map(|r| r.max_norm_b).reduce(f64::max),
            timings: timing_rows(&history.timings),
            spec: spec.clone(),
            config: *config,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let path = if path.is_dir() { path.join(REPORT) } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.display().to_string(), source })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|source| CliError::Json { path: path.display().to_string(), source })?;
        fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per recorded outer iteration.
pub fn write_history(path: &Path, history: &RunHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "outer",
        "objective",
        "penalty",
        "volume",
        "design_min",
        "design_max",
        "newton_iterations",
        "factorizations",
        "ica_iterations",
        "fallbacks",
        "backtracks",
        "residual",
        "gp_norm",
        "theta",
        "move_limit",
        "max_norm_b",
    ]
    .map(String::from)
    .to_vec();
    header.extend(Timings::default().rows().iter().map(|(name, _)| name.to_string()));
    w.write_record(&header)?;
    for r in &history.records {
        let mut row = vec![
            r.outer.to_string(),
            r.objective.to_string(),
            r.penalty.to_string(),
            r.volume.to_string(),
            r.design_min.to_string(),
            r.design_max.to_string(),
            r.newton_iterations.to_string(),
            r.factorizations.to_string(),
            r.ica_iterations.to_string(),
            r.fallbacks.to_string(),
            r.backtracks.to_string(),
            r.residual.to_string(),
            r.gp_norm.to_string(),
            r.theta.to_string(),
            r.move_limit.to_string(),
            opt(r.max_norm_b),
        ];
        row.extend(r.timings.rows().iter().map(|(_, s)| s.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `max ‖B‖₂` per outer iteration.
pub fn write_norm_b(path: &Path, history: &RunHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["outer", "max_norm_b"])?;
    for r in &history.records {
        w.write_record([r.outer.to_string(), opt(r.max_norm_b)])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Gray level of density `d`: solid is black, void is white.
pub fn pixel(d: f64, rho_min: f64) -> u8 {
    let t = 1.0 - (d - rho_min) / (1.0 - rho_min);
    (255.0 * t).round().clamp(0.0, 255.0) as u8
}

/// Binary PGM of element densities on an `nx × ny` grid whose elements are
/// numbered row by row from the bottom; the image's first row is the top.
pub fn pgm_bytes(densities: &[f64], nx: usize, ny: usize, rho_min: f64) -> Result<Vec<u8>> {
    if densities.len() != nx * ny {
        return Err(CliError::InvalidArgument(format!("{} densities for a {nx}x{ny} grid", densities.len())));
    }
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    for j in (0..ny).rev() {
        out.extend(densities[j * nx..(j + 1) * nx].iter().map(|&d| pixel(d, rho_min)));
    }
    Ok(out)
}

/// Runs the optimizer and writes every artifact into `resolved.out`.
/// Artifacts are written even when the run ends on a solver failure.
pub fn run(resolved: &Resolved) -> Result<(Report, OptimizationResult)> {
    let out = &resolved.out;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let (spec, config) = (&resolved.problem, &resolved.config);
    log::info!("{} {}x{} with {} ({:?})", spec.kind, spec.nx, spec.ny, config.strategy, config.mode);
    let result = optimize(spec, config)?;
    let report = Report::new(spec, config, &result.history);
    report.write(&out.join(REPORT))?;
    write_history(&out.join(HISTORY), &result.history)?;
    let pgm = pgm_bytes(&result.physical, spec.nx, spec.ny, config.rho_min)?;
    let path = out.join(DENSITY);
    fs::write(&path, pgm).map_err(|e| CliError::io(&path, e))?;
    if resolved.monitor_norm_b {
        write_norm_b(&out.join(NORM_B), &result.history)?;
    }
    Ok((report, result))
}
