//! Python bindings: benchmark runs, direct trajectory solves and dense QPs.
//!
//! Vectors cross the boundary as lists of floats, matrices as lists of rows.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use alprox::cli::{self, BuiltProblem, RunSpec, SolverKind};
use alprox::nlp::{self, BclParams, HessianMode, LineSearchParams, QuadraticProgram};
use alprox::trajopt::{self, Trajectory};
use alprox::{Error, TraceRecord};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::Dimension(_) | Error::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn hessian_mode(name: &str) -> PyResult<HessianMode> {
    match name {
        "gauss-newton" => Ok(HessianMode::GaussNewton),
        "exact" => Ok(HessianMode::Exact),
        other => Err(PyValueError::new_err(format!("unknown hessian mode {other:?} (gauss-newton or exact)"))),
    }
}

fn rows(vs: &[DVector<f64>]) -> Vec<Vec<f64>> {
    vs.iter().map(|v| v.iter().copied().collect()).collect()
}

fn matrix(name: &str, m: Option<Vec<Vec<f64>>>, ncols: usize) -> PyResult<DMatrix<f64>> {
    let Some(m) = m else { return Ok(DMatrix::zeros(0, ncols)) };
    if m.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{name}: every row must have {ncols} entries")));
    }
    Ok(DMatrix::from_row_iterator(m.len(), ncols, m.into_iter().flatten()))
}

fn trace_list<'py>(py: Python<'py>, trace: &[TraceRecord]) -> PyResult<Bound<'py, PyList>> {
    let list = PyList::empty(py);
    for r in trace {
        let d = PyDict::new(py);
        d.set_item("outer_iter", r.outer_iter)?;
        d.set_item("inner_iter", r.inner_iter)?;
        d.set_item("merit", r.merit)?;
        d.set_item("primal_inf", r.primal_inf)?;
        d.set_item("dual_inf", r.dual_inf)?;
        d.set_item("mu_e", r.mu_e)?;
        d.set_item("mu_i", r.mu_i)?;
        d.set_item("rho", r.rho)?;
        d.set_item("alpha", r.alpha)?;
        d.set_item("active_set_size", r.active_set_size)?;
        d.set_item("regularization", r.regularization)?;
        list.append(d)?;
    }
    Ok(list)
}

fn trajectory_dict<'py>(py: Python<'py>, t: &Trajectory) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("xs", rows(&t.xs))?;
    d.set_item("us", rows(&t.us))?;
    d.set_item("lams", rows(&t.lams))?;
    d.set_item("nus", rows(&t.nus))?;
    Ok(d)
}

/// `[(name, description), ...]` of the registered benchmark problems.
#[pyfunction]
fn list_problems() -> Vec<(String, String)> {
    cli::PROBLEMS.iter().map(|(n, d)| (n.to_string(), d.to_string())).collect()
}

/// Runs a benchmark exactly like `alprox run`. Setup errors raise
/// `ValueError`; solver failures are reported through `status`/`error`.
#[pyfunction]
#[pyo3(signature = (problem, solver="ddp", tol=None, max_outer=None, max_inner=None, mu0=None, mui0=None,
                    rho0=None, hessian="gauss-newton", seed=0, config=None, out=None, trace=None, plot_data=None))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    problem: &str,
    solver: &str,
    tol: Option<f64>,
    max_outer: Option<usize>,
    max_inner: Option<usize>,
    mu0: Option<f64>,
    mui0: Option<f64>,
    rho0: Option<f64>,
    hessian: &str,
    seed: u64,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    trace: Option<PathBuf>,
    plot_data: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = RunSpec {
        problem: problem.to_string(),
        solver: solver.parse::<SolverKind>().map_err(PyValueError::new_err)?,
        tol,
        max_outer,
        max_inner,
        mu0,
        mui0,
        rho0,
        hessian: hessian_mode(hessian)?,
        seed,
        config,
        out,
        trace,
        plot_data,
    };
    let outcome = py.detach(|| cli::run(&spec)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("status", outcome.status.map(|s| s.to_string()))?;
    d.set_item("error", outcome.error.clone())?;
    d.set_item("exit_code", outcome.exit_code())?;
    d.set_item("outer_iters", outcome.outer_iters)?;
    d.set_item("total_inner_iters", outcome.total_inner_iters)?;
    d.set_item("dual_inf", outcome.dual_inf)?;
    d.set_item("primal_inf", outcome.primal_inf)?;
    match &outcome.solution {
        Some(t) => {
            d.set_item("xs", rows(&t.xs))?;
            d.set_item("us", rows(&t.us))?;
        }
        None => {
            d.set_item("xs", py.None())?;
            d.set_item("us", py.None())?;
        }
    }
    d.set_item("trace", trace_list(py, &outcome.trace)?)?;
    Ok(d)
}

/// A registered benchmark problem, solved with the constrained DDP solver.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    name: String,
    built: BuiltProblem,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (name, seed=0, config=None))]
    fn new(name: &str, seed: u64, config: Option<PathBuf>) -> PyResult<Self> {
        let built = cli::build_problem(name, seed, config.as_deref()).map_err(py_err)?;
        Ok(Self { name: name.to_string(), built })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.name
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.built.problem.horizon()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.built.dt
    }

    #[getter]
    fn x0(&self) -> Vec<f64> {
        self.built.problem.x0_bar.iter().copied().collect()
    }

    #[getter]
    fn control_bounds(&self) -> Vec<(f64, f64)> {
        self.built.control_bounds.clone()
    }

    /// Solves from the default initial guess (zero controls, `x̄_0` copied
    /// along the horizon). `mu0` is a penalty weight: `μ = 1/mu0`.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (tol=None, mu0=None, rho0=None, max_outer=100, max_inner=200, hessian="gauss-newton"))]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        tol: Option<f64>,
        mu0: Option<f64>,
        rho0: Option<f64>,
        max_outer: usize,
        max_inner: usize,
        hessian: &str,
    ) -> PyResult<Bound<'py, PyDict>> {
        let (tol0, mu00, rho00) = self.built.defaults;
        let mu = 1.0 / mu0.unwrap_or(mu00);
        let bcl = BclParams {
            eps_abs: tol.unwrap_or(tol0),
            mu_e0: mu,
            mu_i0: mu,
            rho0: rho0.unwrap_or(rho00),
            max_outer_iters: max_outer,
            max_inner_iters: max_inner,
            ..Default::default()
        };
        let mode = hessian_mode(hessian)?;
        let problem = &self.built.problem;
        let (traj, rep) = py
            .detach(|| {
                let init = Trajectory::from_initial_state(problem)?;
                trajopt::solve(problem, &init, &bcl, &LineSearchParams::default(), mode)
            })
            .map_err(py_err)?;
        let d = trajectory_dict(py, &traj)?;
        d.set_item("status", rep.status.to_string())?;
        d.set_item("outer_iters", rep.outer_iters)?;
        d.set_item("total_inner_iters", rep.total_inner_iters)?;
        d.set_item("dual_inf", rep.dual_inf)?;
        d.set_item("primal_inf", rep.primal_inf)?;
        d.set_item("regularizations", rep.regularizations)?;
        d.set_item("max_kkt_residual", rep.max_kkt_residual)?;
        d.set_item("trace", trace_list(py, &rep.trace)?)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Problem({:?}, horizon={})", self.name, self.horizon())
    }
}

/// `min ½xᵀPx + qᵀx  s.t.  Ax = b,  Gx <= g` with the primal-dual
/// augmented Lagrangian solver.
#[pyfunction]
#[pyo3(signature = (p, q, a=None, b=None, g_mat=None, g=None, tol=1e-8))]
#[allow(clippy::too_many_arguments)]
fn solve_qp<'py>(
    py: Python<'py>,
    p: Vec<Vec<f64>>,
    q: Vec<f64>,
    a: Option<Vec<Vec<f64>>>,
    b: Option<Vec<f64>>,
    g_mat: Option<Vec<Vec<f64>>>,
    g: Option<Vec<f64>>,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let n = q.len();
    let qp = QuadraticProgram::new(
        matrix("p", Some(p), n)?,
        DVector::from_vec(q),
        matrix("a", a, n)?,
        DVector::from_vec(b.unwrap_or_default()),
        matrix("g_mat", g_mat, n)?,
        DVector::from_vec(g.unwrap_or_default()),
    )
    .map_err(py_err)?;
    let bcl = BclParams { eps_abs: tol, ..Default::default() };
    let rep = py
        .detach(|| {
            nlp::solve(
                &qp,
                &DVector::zeros(n),
                &DVector::zeros(qp.b.len()),
                &DVector::zeros(qp.g_vec.len()),
                &bcl,
                &LineSearchParams::default(),
                HessianMode::Exact,
            )
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("status", rep.status.to_string())?;
    d.set_item("x", rep.solution.x.as_slice().to_vec())?;
    d.set_item("lam", rep.solution.lam.as_slice().to_vec())?;
    d.set_item("nu", rep.solution.nu.as_slice().to_vec())?;
    d.set_item("outer_iters", rep.outer_iters)?;
    d.set_item("total_inner_iters", rep.total_inner_iters)?;
    d.set_item("dual_inf", rep.dual_inf)?;
    d.set_item("primal_inf", rep.primal_inf)?;
    Ok(d)
}

#[pymodule]
fn alprox_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(list_problems, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(solve_qp, m)?)?;
    m.add_class::<PyProblem>()?;
    m.add("SCHEMA_VERSION", cli::SCHEMA_VERSION)?;
    Ok(())
}
