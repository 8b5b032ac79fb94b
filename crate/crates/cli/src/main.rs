use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ica_topopt::bench::ProblemKind;
use ica_topopt::filter::FilterKernel;
use ica_topopt::history::Termination;
use ica_topopt::Strategy;
use ica_topopt_cli::artifacts::{self, Report};
use ica_topopt_cli::compare::compare;
use ica_topopt_cli::settings::{parse_mesh, RunSettings};

#[derive(Parser)]
#[command(name = "ica-topopt", version, about = "Topology optimization of geometrically nonlinear structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimization and write its artifacts.
    Run(RunArgs),
    /// Compare reports of the same problem and mesh.
    Compare {
        /// report.json files or run directories; the first is the reference.
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = |s: &str| s.parse::<ProblemKind>().map_err(|e| e.to_string()))]
    problem: Option<ProblemKind>,
    /// Mesh as WxH; defaults to the problem's desk mesh.
    #[arg(long, value_parser = |s: &str| parse_mesh(s).map_err(|e| e.to_string()))]
    mesh: Option<(usize, usize)>,
    #[arg(long, value_parser = |s: &str| s.parse::<Strategy>().map_err(|e| e.to_string()))]
    strategy: Option<Strategy>,
    /// Number of design updates.
    #[arg(long, conflicts_with = "converge")]
    budget: Option<usize>,
    /// Stop when the projected gradient norm drops below this value.
    #[arg(long)]
    converge: Option<f64>,
    /// Cap on design updates in convergence mode.
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    move_limit: Option<f64>,
    #[arg(long, value_parser = |s: &str| s.parse::<FilterKernel>().map_err(|e| e.to_string()))]
    filter_kernel: Option<FilterKernel>,
    /// Estimate ‖B‖₂ at every reuse step and write normB.csv.
    #[arg(long = "monitor-normB")]
    monitor_norm_b: bool,
    /// Small-displacement linear elasticity instead of the nonlinear model.
    #[arg(long)]
    linear: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn settings(&self) -> ica_topopt_cli::Result<RunSettings> {
        let flags = RunSettings {
            problem: self.problem,
            mesh: self.mesh,
            strategy: self.strategy,
            budget: self.budget,
            converge: self.converge,
            max_iterations: self.max_iterations,
            move_limit: self.move_limit,
            filter_kernel: self.filter_kernel,
            monitor_norm_b: self.monitor_norm_b,
            linear: self.linear,
            out: self.out.clone(),
        };
        Ok(match &self.config {
            Some(path) => RunSettings::from_file(path)?.overridden_by(flags),
            None => flags,
        })
    }
}

fn run(args: &RunArgs) -> ExitCode {
    let resolved = match args.settings().and_then(|s| s.resolve()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match artifacts::run(&resolved) {
        Ok((report, _)) => {
            println!(
                "{} {} {}x{}: F = {} after {} iterations, {} factorizations ({:?})",
                report.strategy,
                report.problem,
                report.mesh[0],
                report.mesh[1],
                report.final_objective.map_or("n/a".to_string(), |f| format!("{f:.6e}")),
                report.outer_iterations,
                report.factorizations,
                report.termination,
            );
            println!("artifacts in {}", resolved.out.display());
            if report.termination == Termination::NewtonFailure {
                eprintln!("error: {}", report.failure.as_deref().unwrap_or("solver failure"));
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => run(&args),
        Command::Compare { reports } => {
            let loaded: Result<Vec<Report>, _> = reports.iter().map(|p| Report::read(p)).collect();
            match loaded.and_then(|r| compare(&r)) {
                Ok(table) => {
                    print!("{}", table.render());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
