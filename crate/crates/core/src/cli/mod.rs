//! Benchmark runner behind the `alprox` binary.
//!
//! A run builds a named problem, solves it with the DDP solver or with the
//! generic NLP solver on the stacked formulation, and writes
//!
//! * a JSON result document (`--out`, schema below),
//! * a CSV trace with one row per accepted inner step (`--trace`),
//! * a CSV of states and controls over time with bound columns
//!   (`--plot-data`).
//!
//! Penalties are given as weights: `--mu0 100` means `μ_e = 1/100`. The
//! conversion is recorded in the result document and in the first line of
//! the trace (a `#` comment above the header row).
//!
//! Result document, `schema_version` 1:
//!
//! ```text
//! schema_version, problem, solver, seed,
//! settings { tol, max_outer, max_inner, mu0, mui0, mu_e0, mu_i0, rho0, hessian },
//! status ("converged" | "max_iters" | "line_search_failure" | "error"), error,
//! outer_iters, total_inner_iters, dual_inf, primal_inf,
//! final_penalties { mu_e, mu_i, rho }, regularizations, rho_escalations,
//! max_kkt_residual, dt, xs [[..]], us [[..]]
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nlp::{self, BclParams, HessianMode, LineSearchParams};
use crate::problems::{
    apply_car_config, apply_lqr_config, make_bound_lqr, make_car_park, make_obstacle_lqr, make_random_ocp,
    obstacle_scenario, random_bound_lqr, random_ocp, read_config, CarParkConfig, RotationalSetup,
};
use crate::report::{SolveStatus, TraceRecord};
use crate::trajopt::{self, stacked_nlp_view, TrajOptProblem, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

/// Registered problems, in listing order.
pub const PROBLEMS: [(&str, &str); 6] = [
    ("lqr-rot", "bound-constrained LQR on a rotational system; controls saturate, origin reached"),
    ("lqr-unstable", "bound-constrained LQR on a repulsive spiral; bang-bang controls, origin out of reach"),
    ("lqr-obstacle", "rotational LQR that must skirt a box obstacle"),
    ("car-park", "kinematic car parking from (1, 1, 3pi/2, 0), 15 s horizon"),
    ("random-lqr", "seeded random bound-constrained LQR (N*nu <= 8)"),
    ("random-ocp", "seeded random nonlinear control problem (N <= 5)"),
];

pub fn list_problems() -> String {
    PROBLEMS.iter().map(|(name, desc)| format!("{name:<14} {desc}\n")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    Ddp,
    StackedNlp,
}

impl std::str::FromStr for SolverKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ddp" => Ok(SolverKind::Ddp),
            "stacked-nlp" => Ok(SolverKind::StackedNlp),
            _ => Err(format!("unknown solver {s:?} (expected ddp or stacked-nlp)")),
        }
    }
}

/// One benchmark run. Unset numeric fields take the problem's defaults.
#[derive(Debug, Clone, Default)]
pub struct RunSpec {
    pub problem: String,
    pub solver: SolverKind,
    pub tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    /// Equality penalty weight; `μ_e = 1/mu0`.
    pub mu0: Option<f64>,
    /// Inequality penalty weight; `μ_i = 1/mui0`. Defaults to `mu0`.
    pub mui0: Option<f64>,
    pub rho0: Option<f64>,
    pub hessian: HessianMode,
    pub seed: u64,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub plot_data: Option<PathBuf>,
}

/// A constructed problem with the data needed for reporting.
pub struct BuiltProblem {
    pub problem: TrajOptProblem,
    /// Sampling time of the nodes (1 for the abstract random instances).
    pub dt: f64,
    /// `(lo, hi)` per control component.
    pub control_bounds: Vec<(f64, f64)>,
    /// Problem-specific defaults: `(tol, mu0, rho0)`.
    pub defaults: (f64, f64, f64),
}

const LQR_DEFAULTS: (f64, f64, f64) = (1e-8, 100.0, 1e-6);
const CAR_DEFAULTS: (f64, f64, f64) = (2e-4, 100.0, 1e-5);

fn symmetric_bounds(n: usize, b: f64) -> Vec<(f64, f64)> {
    vec![(-b, b); n]
}

/// Builds a registered problem, applying the optional configuration file.
/// Unknown names give [`Error::InvalidParameter`].
pub fn build_problem(name: &str, seed: u64, config: Option<&Path>) -> Result<BuiltProblem> {
    let text = config.map(read_config).transpose()?;
    let lqr = |base: RotationalSetup, with_default_obstacle: bool| -> Result<BuiltProblem> {
        let (setup, obstacle) = match &text {
            Some(t) => apply_lqr_config(t, base)?,
            None => (base, None),
        };
        let cfg = setup.to_config()?;
        let problem = if with_default_obstacle {
            let obstacles = match obstacle {
                Some(o) => vec![o],
                None => obstacle_scenario()?.1,
            };
            make_obstacle_lqr(&cfg, &obstacles)?
        } else {
            if obstacle.is_some() {
                return Err(Error::Config("obstacle keys only apply to lqr-obstacle".into()));
            }
            make_bound_lqr(&cfg)?
        };
        Ok(BuiltProblem {
            problem,
            dt: setup.dt,
            control_bounds: symmetric_bounds(cfg.nu(), setup.u_bar),
            defaults: LQR_DEFAULTS,
        })
    };
    let no_config = || -> Result<()> {
        if config.is_some() {
            return Err(Error::Config(format!("{name} takes no configuration file (use --seed)")));
        }
        Ok(())
    };
    match name {
        "lqr-rot" => lqr(RotationalSetup::rotational(), false),
        "lqr-unstable" => lqr(RotationalSetup::unstable(), false),
        "lqr-obstacle" => lqr(RotationalSetup::rotational(), true),
        "car-park" => {
            let cfg = match &text {
                Some(t) => apply_car_config(t, CarParkConfig::default())?,
                None => CarParkConfig::default(),
            };
            Ok(BuiltProblem {
                problem: make_car_park(&cfg)?,
                dt: cfg.dt,
                control_bounds: vec![(-cfg.w_max, cfg.w_max), (-cfg.a_max, cfg.a_max)],
                defaults: CAR_DEFAULTS,
            })
        }
        "random-lqr" => {
            no_config()?;
            let cfg = random_bound_lqr(seed);
            Ok(BuiltProblem {
                problem: make_bound_lqr(&cfg)?,
                dt: 1.0,
                control_bounds: symmetric_bounds(cfg.nu(), cfg.u_bar),
                defaults: LQR_DEFAULTS,
            })
        }
        "random-ocp" => {
            no_config()?;
            let cfg = random_ocp(seed);
            Ok(BuiltProblem {
                problem: make_random_ocp(&cfg)?,
                dt: 1.0,
                control_bounds: symmetric_bounds(cfg.b.ncols(), cfg.u_bar),
                defaults: LQR_DEFAULTS,
            })
        }
        _ => Err(Error::InvalidParameter(format!(
            "unknown problem {name:?}; `alprox list` shows the registered problems"
        ))),
    }
}

#[derive(Debug, Clone, Serialize)]
struct Settings {
    tol: f64,
    max_outer: usize,
    max_inner: usize,
    mu0: f64,
    mui0: f64,
    mu_e0: f64,
    mu_i0: f64,
    rho0: f64,
    hessian: String,
}

#[derive(Debug, Clone, Serialize)]
struct FinalPenalties {
    mu_e: f64,
    mu_i: f64,
    rho: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ResultDoc {
    schema_version: u32,
    problem: String,
    solver: SolverKind,
    seed: u64,
    settings: Settings,
    status: String,
    error: Option<String>,
    outer_iters: usize,
    total_inner_iters: usize,
    dual_inf: f64,
    primal_inf: f64,
    final_penalties: Option<FinalPenalties>,
    regularizations: Option<usize>,
    rho_escalations: Option<usize>,
    max_kkt_residual: Option<f64>,
    dt: f64,
    xs: Vec<Vec<f64>>,
    us: Vec<Vec<f64>>,
}

/// What a run produced, independent of the files written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// `None` when the solver raised an error.
    pub status: Option<SolveStatus>,
    pub error: Option<String>,
    pub outer_iters: usize,
    pub total_inner_iters: usize,
    pub dual_inf: f64,
    pub primal_inf: f64,
    pub solution: Option<Trajectory>,
    pub trace: Vec<TraceRecord>,
}

impl RunOutcome {
    /// 0 on convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.status == Some(SolveStatus::Converged) {
            0
        } else {
            1
        }
    }
}

fn settings(spec: &RunSpec, built: &BuiltProblem) -> Result<(BclParams, Settings)> {
    let (tol0, mu00, rho00) = built.defaults;
    let defaults = BclParams::default();
    let tol = spec.tol.unwrap_or(tol0);
    let mu0 = spec.mu0.unwrap_or(mu00);
    let mui0 = spec.mui0.unwrap_or(mu0);
    for (name, v) in [("tol", tol), ("mu0", mu0), ("mui0", mui0)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("--{name} must be positive, got {v}")));
        }
    }
    let bcl = BclParams {
        eps_abs: tol,
        mu_e0: 1.0 / mu0,
        mu_i0: 1.0 / mui0,
        rho0: spec.rho0.unwrap_or(rho00),
        max_outer_iters: spec.max_outer.unwrap_or(defaults.max_outer_iters),
        max_inner_iters: spec.max_inner.unwrap_or(defaults.max_inner_iters),
        ..defaults
    };
    bcl.validate()?;
    let s = Settings {
        tol,
        max_outer: bcl.max_outer_iters,
        max_inner: bcl.max_inner_iters,
        mu0,
        mui0,
        mu_e0: bcl.mu_e0,
        mu_i0: bcl.mu_i0,
        rho0: bcl.rho0,
        hessian: match spec.hessian {
            HessianMode::GaussNewton => "gauss-newton".to_string(),
            HessianMode::Exact => "exact".to_string(),
            HessianMode::ScaledIdentity(s) => format!("scaled-identity({s})"),
        },
    };
    Ok((bcl, s))
}

fn solve_built(built: &BuiltProblem, spec: &RunSpec, bcl: &BclParams) -> (RunOutcome, Option<ResultExtras>) {
    let ls = LineSearchParams::default();
    let problem = &built.problem;
    let init = match Trajectory::from_initial_state(problem) {
        Ok(t) => t,
        Err(e) => return (failed(e), None),
    };
    match spec.solver {
        SolverKind::Ddp => match trajopt::solve(problem, &init, bcl, &ls, spec.hessian) {
            Ok((traj, rep)) => (
                RunOutcome {
                    status: Some(rep.status),
                    error: None,
                    outer_iters: rep.outer_iters,
                    total_inner_iters: rep.total_inner_iters,
                    dual_inf: rep.dual_inf,
                    primal_inf: rep.primal_inf,
                    solution: Some(traj),
                    trace: rep.trace,
                },
                Some(ResultExtras {
                    penalties: FinalPenalties {
                        mu_e: rep.penalties.mu_e,
                        mu_i: rep.penalties.mu_i,
                        rho: rep.penalties.rho,
                    },
                    regularizations: Some(rep.regularizations),
                    rho_escalations: Some(rep.rho_escalations),
                    max_kkt_residual: Some(rep.max_kkt_residual),
                }),
            ),
            Err(e) => (failed(e), None),
        },
        SolverKind::StackedNlp => {
            let view = stacked_nlp_view(problem);
            let run = view.from_trajectory(&init).and_then(|w0| {
                let rep = nlp::solve(&view, &w0.x, &w0.lam, &w0.nu, bcl, &ls, spec.hessian)?;
                let traj = view.to_trajectory(&rep.solution)?;
                Ok((traj, rep))
            });
            match run {
                Ok((traj, rep)) => (
                    RunOutcome {
                        status: Some(rep.status),
                        error: None,
                        outer_iters: rep.outer_iters,
                        total_inner_iters: rep.total_inner_iters,
                        dual_inf: rep.dual_inf,
                        primal_inf: rep.primal_inf,
                        solution: Some(traj),
                        trace: rep.trace,
                    },
                    Some(ResultExtras {
                        penalties: FinalPenalties {
                            mu_e: rep.penalties.mu_e,
                            mu_i: rep.penalties.mu_i,
                            rho: rep.penalties.rho,
                        },
                        regularizations: None,
                        rho_escalations: None,
                        max_kkt_residual: None,
                    }),
                ),
                Err(e) => (failed(e), None),
            }
        }
    }
}

struct ResultExtras {
    penalties: FinalPenalties,
    regularizations: Option<usize>,
    rho_escalations: Option<usize>,
    max_kkt_residual: Option<f64>,
}

fn failed(e: Error) -> RunOutcome {
    RunOutcome {
        status: None,
        error: Some(e.to_string()),
        outer_iters: 0,
        total_inner_iters: 0,
        dual_inf: f64::NAN,
        primal_inf: f64::NAN,
        solution: None,
        trace: Vec::new(),
    }
}

/// Writes `contents` to a sibling temporary file, then renames it over
/// `path`, so readers never see a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Trace table: a `#` line with the penalty convention, the header row,
/// then one row per accepted inner step.
pub fn trace_csv(trace: &[TraceRecord], mu0: f64, mui0: f64) -> String {
    let mut s = format!(
        "# penalties as weights: mu_e = 1/mu0, mu_i = 1/mui0 (mu0 = {mu0}, mui0 = {mui0})\n{}\n",
        TraceRecord::csv_header()
    );
    for r in trace {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Columns `k, t, x_0.., u_0.., u_j_lo, u_j_hi..`; the last node has empty
/// control cells.
pub fn plot_csv(traj: &Trajectory, dt: f64, bounds: &[(f64, f64)]) -> String {
    let nx = traj.xs.first().map_or(0, DVector::len);
    let nu = bounds.len();
    let mut cols = vec!["k".to_string(), "t".to_string()];
    cols.extend((0..nx).map(|i| format!("x_{i}")));
    cols.extend((0..nu).map(|i| format!("u_{i}")));
    for i in 0..nu {
        cols.push(format!("u_{i}_lo"));
        cols.push(format!("u_{i}_hi"));
    }
    let mut s = cols.join(",");
    s.push('\n');
    for (k, x) in traj.xs.iter().enumerate() {
        let mut row = vec![k.to_string(), format!("{:e}", k as f64 * dt)];
        row.extend(x.iter().map(|v| format!("{v:e}")));
        match traj.us.get(k) {
            Some(u) => row.extend(u.iter().map(|v| format!("{v:e}"))),
            None => row.extend(std::iter::repeat_n(String::new(), nu)),
        }
        for (lo, hi) in bounds {
            row.push(format!("{lo:e}"));
            row.push(format!("{hi:e}"));
        }
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn rows(vs: &[DVector<f64>]) -> Vec<Vec<f64>> {
    vs.iter().map(|v| v.iter().copied().collect()).collect()
}

/// Builds, solves and writes the requested outputs. Setup problems
/// (unknown problem, bad configuration, invalid settings) are returned as
/// errors; solver failures are reported in the outcome.
pub fn run(spec: &RunSpec) -> Result<RunOutcome> {
    let built = build_problem(&spec.problem, spec.seed, spec.config.as_deref())?;
    let (bcl, settings) = settings(spec, &built)?;
    log::info!(
        "{} with {:?}: tol {:e}, mu_e0 {:e}, mu_i0 {:e}, rho0 {:e}",
        spec.problem,
        spec.solver,
        bcl.eps_abs,
        bcl.mu_e0,
        bcl.mu_i0,
        bcl.rho0
    );
    let (outcome, extras) = solve_built(&built, spec, &bcl);

    if let Some(path) = &spec.trace {
        write_atomic(path, trace_csv(&outcome.trace, settings.mu0, settings.mui0).as_bytes())?;
    }
    if let (Some(path), Some(traj)) = (&spec.plot_data, &outcome.solution) {
        write_atomic(path, plot_csv(traj, built.dt, &built.control_bounds).as_bytes())?;
    }
    if let Some(path) = &spec.out {
        let doc = ResultDoc {
            schema_version: SCHEMA_VERSION,
            problem: spec.problem.clone(),
            solver: spec.solver,
            seed: spec.seed,
            settings,
            status: outcome.status.map_or("error".to_string(), |s| s.as_str().to_string()),
            error: outcome.error.clone(),
            outer_iters: outcome.outer_iters,
            total_inner_iters: outcome.total_inner_iters,
            dual_inf: outcome.dual_inf,
            primal_inf: outcome.primal_inf,
            final_penalties: extras.as_ref().map(|e| e.penalties.clone()),
            regularizations: extras.as_ref().and_then(|e| e.regularizations),
            rho_escalations: extras.as_ref().and_then(|e| e.rho_escalations),
            max_kkt_residual: extras.as_ref().and_then(|e| e.max_kkt_residual),
            dt: built.dt,
            xs: outcome.solution.as_ref().map_or_else(Vec::new, |t| rows(&t.xs)),
            us: outcome.solution.as_ref().map_or_else(Vec::new, |t| rows(&t.us)),
        };
        let json = serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))?;
        write_atomic(path, json.as_bytes())?;
    }
    Ok(outcome)
}
