use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use alprox::cli::{self, RunSpec, SolverKind};
use alprox::nlp::HessianMode;

/// Primal-dual augmented Lagrangian benchmark runner.
///
/// Diagnostics go to standard error; set ALPROX_LOG (error, warn, info,
/// debug, trace) to choose their verbosity.
#[derive(Parser)]
#[command(name = "alprox", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the registered problems.
    List,
    /// Solve one problem. Exit code 0 on convergence, 1 on solver failure,
    /// 2 on usage errors (unknown problem, bad configuration).
    Run(Box<RunArgs>),
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Ddp,
    StackedNlp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Hessian {
    GaussNewton,
    Exact,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Problem name (see `alprox list`).
    problem: String,
    /// Absolute stopping tolerance on the KKT residuals.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    max_inner: Option<usize>,
    /// Initial equality penalty weight; the solver uses mu_e = 1/mu0.
    #[arg(long)]
    mu0: Option<f64>,
    /// Initial inequality penalty weight (mu_i = 1/mui0); defaults to mu0.
    #[arg(long)]
    mui0: Option<f64>,
    /// Initial proximal parameter.
    #[arg(long)]
    rho0: Option<f64>,
    #[arg(long, value_enum, default_value = "ddp")]
    solver: Solver,
    #[arg(long, value_enum, default_value = "gauss-newton")]
    hessian: Hessian,
    /// Seed of the random-* problems.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML file overriding problem data.
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON result document.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV trace, one row per accepted inner step.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// CSV of states and controls over time.
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ALPROX_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::List => {
            print!("{}", cli::list_problems());
            ExitCode::SUCCESS
        }
        Command::Run(a) => {
            let a = *a;
            let spec = RunSpec {
                problem: a.problem,
                solver: match a.solver {
                    Solver::Ddp => SolverKind::Ddp,
                    Solver::StackedNlp => SolverKind::StackedNlp,
                },
                tol: a.tol,
                max_outer: a.max_outer,
                max_inner: a.max_inner,
                mu0: a.mu0,
                mui0: a.mui0,
                rho0: a.rho0,
                hessian: match a.hessian {
                    Hessian::GaussNewton => HessianMode::GaussNewton,
                    Hessian::Exact => HessianMode::Exact,
                },
                seed: a.seed,
                config: a.config,
                out: a.out,
                trace: a.trace,
                plot_data: a.plot_data,
            };
            match cli::run(&spec) {
                Ok(outcome) => {
                    match outcome.status {
                        Some(status) => println!(
                            "{}: {status} after {} iterations ({} outer), primal {:.3e}, dual {:.3e}",
                            spec.problem,
                            outcome.total_inner_iters,
                            outcome.outer_iters,
                            outcome.primal_inf,
                            outcome.dual_inf
                        ),
                        None => eprintln!(
                            "{}: solver error: {}",
                            spec.problem,
                            outcome.error.as_deref().unwrap_or("unknown")
                        ),
                    }
                    ExitCode::from(outcome.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
