//! Run settings from command-line flags and flat `key=value` config files.
//!
//! Config files use the flag names without the leading dashes, one per line.
//! Blank lines and lines starting with `#` are ignored. Flags given on the
//! command line override the file.

use std::path::{Path, PathBuf};

use ica_topopt::bench::{linear_mode, ProblemKind, ProblemSpec};
use ica_topopt::filter::FilterKernel;
use ica_topopt::optimizer::{OptimizerConfig, RunMode};
use ica_topopt::Strategy;

use crate::{CliError, Result};

/// Outer iterations allowed in convergence mode unless overridden.
pub const DEFAULT_MAX_ITERATIONS: usize = 500;

/// Every setting a run accepts. `None` means "not given".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub problem: Option<ProblemKind>,
    pub mesh: Option<(usize, usize)>,
    pub strategy: Option<Strategy>,
    pub budget: Option<usize>,
    pub converge: Option<f64>,
    pub max_iterations: Option<usize>,
    pub move_limit: Option<f64>,
    pub filter_kernel: Option<FilterKernel>,
    pub monitor_norm_b: bool,
    pub linear: bool,
    pub out: Option<PathBuf>,
}

/// Fully resolved run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub problem: ProblemSpec,
    pub config: OptimizerConfig,
    pub out: PathBuf,
    pub monitor_norm_b: bool,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::InvalidArgument(msg.into())
}

/// Parses `WxH`, e.g. `60x15`.
pub fn parse_mesh(s: &str) -> Result<(usize, usize)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| invalid(format!("mesh must look like WxH, got '{s}'")))?;
    let parse = |t: &str| t.trim().parse::<usize>().ok().filter(|&n| n > 0);
    match (parse(w), parse(h)) {
        (Some(w), Some(h)) => Ok((w, h)),
        _ => Err(invalid(format!("mesh must have positive integer sides, got '{s}'"))),
    }
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" | "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(invalid(format!("expected a boolean, got '{s}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| invalid(format!("{key}: cannot parse '{s}'")))
}

impl RunSettings {
    /// Applies one `key=value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "problem" => self.problem = Some(v.parse()?),
            "mesh" => self.mesh = Some(parse_mesh(v)?),
            "strategy" => self.strategy = Some(v.parse()?),
            "budget" => self.budget = Some(parse_num("budget", v)?),
            "converge" => self.converge = Some(parse_num("converge", v)?),
            "max-iterations" => self.max_iterations = Some(parse_num("max-iterations", v)?),
            "move-limit" => self.move_limit = Some(parse_num("move-limit", v)?),
            "filter-kernel" => self.filter_kernel = Some(v.parse()?),
            "monitor-normb" => self.monitor_norm_b = parse_bool(v)?,
            "linear" => self.linear = parse_bool(v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            other => return Err(invalid(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a flat config file body.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut s = RunSettings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::Config { line: i + 1, message: format!("expected key=value, got '{line}'") })?;
            s.set(k, v).map_err(|e| CliError::Config { line: i + 1, message: e.to_string() })?;
        }
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse_config(&text)
    }

    /// `self` with every setting given in `over` replaced.
    pub fn overridden_by(mut self, over: RunSettings) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(problem, mesh, strategy, budget, converge, max_iterations, move_limit, filter_kernel, out);
        if over.budget.is_some() {
            self.converge = None;
        }
        if over.converge.is_some() {
            self.budget = None;
        }
        self.monitor_norm_b |= over.monitor_norm_b;
        self.linear |= over.linear;
        self
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let kind = self.problem.ok_or_else(|| invalid("no problem given"))?;
        let mut problem = kind.desk();
        if let Some((nx, ny)) = self.mesh {
            problem = problem.with_mesh(nx, ny);
        }
        if self.linear {
            problem = linear_mode(problem);
        }
        let mut config = OptimizerConfig::default();
        config.mode = match (self.budget, self.converge) {
            (Some(_), Some(_)) => return Err(invalid("budget and converge are mutually exclusive")),
            (Some(n), None) => RunMode::Budget(n),
            (None, Some(tolerance)) => {
                RunMode::Converge { tolerance, max_iterations: self.max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS) }
            }
            (None, None) => config.mode,
        };
        if let Some(s) = self.strategy {
            config.strategy = s;
        }
        if let Some(d) = self.move_limit {
            config.move_limit = d;
        }
        if let Some(k) = self.filter_kernel {
            config.filter_kernel = k;
        }
        config.newton.monitor_norm_b = self.monitor_norm_b;
        config.validate()?;
        Ok(Resolved {
            problem,
            config,
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            monitor_norm_b: self.monitor_norm_b,
        })
    }
}
