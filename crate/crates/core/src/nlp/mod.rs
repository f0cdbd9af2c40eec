//! Generic equality/inequality constrained NLP solver.
//!
//! Solves `min f(x) s.t. c(x) = 0, h(x) <= 0` by approximately minimizing a
//! sequence of proximal primal-dual augmented Lagrangian merit functions
//! with semi-smooth Newton steps, driven by a bound-constrained Lagrangian
//! (BCL) schedule for the penalties, tolerances and multiplier estimates.

mod merit;
mod newton;
mod qp;
pub(crate) mod solver;
#[cfg(test)]
pub(crate) mod test_problems;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::report::{SolveStatus, TraceRecord};

pub use merit::{
    active_set, kkt_residuals, lagrangian, merit_gradient, merit_value, primal_infeasibility,
    rl_residual, shifted_multipliers, shifted_slack, NlpEval,
};
pub use newton::{pd_newton_step, pd_newton_step_with, NewtonStep};
pub use qp::QuadraticProgram;
pub use solver::{
    bcl_update, complementarity_measure, inner_solve, multiplier_update, solve, InnerResult,
};

/// A smooth NLP with user-supplied first and second order derivatives.
///
/// Evaluators must be pure and return outputs of the declared dimensions.
pub trait NlpProblem {
    fn n(&self) -> usize;
    fn ne(&self) -> usize;
    fn ni(&self) -> usize;

    fn objective(&self, x: &DVector<f64>) -> Result<f64>;
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn equalities(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn equality_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
    fn inequalities(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn inequality_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// `∇²ₓ (f + λᵀc + νᵀh)` at `x`.
    fn lagrangian_hessian(
        &self,
        x: &DVector<f64>,
        lam: &DVector<f64>,
        nu: &DVector<f64>,
    ) -> Result<DMatrix<f64>>;
}

/// Which primal Hessian the Newton steps use.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum HessianMode {
    /// Lagrangian Hessian at the shifted multipliers `(2λ̂ − λ, 2ν̂ − ν)`.
    Exact,
    /// Objective Hessian only; constraint curvature is dropped.
    #[default]
    GaussNewton,
    /// `s·I`.
    ScaledIdentity(f64),
}

/// A primal-dual point. Also used as the proximal center / multiplier
/// estimates `(x_l, λ_l, ν_l)` of a subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct NlpIterate {
    pub x: DVector<f64>,
    pub lam: DVector<f64>,
    pub nu: DVector<f64>,
}

impl NlpIterate {
    pub fn new(x: DVector<f64>, lam: DVector<f64>, nu: DVector<f64>) -> Self {
        Self { x, lam, nu }
    }

    pub fn zeros<P: NlpProblem + ?Sized>(prob: &P) -> Self {
        Self {
            x: DVector::zeros(prob.n()),
            lam: DVector::zeros(prob.ne()),
            nu: DVector::zeros(prob.ni()),
        }
    }

    pub(crate) fn check_dims<P: NlpProblem + ?Sized>(&self, prob: &P) -> Result<()> {
        crate::error::check_len("x", self.x.len(), prob.n())?;
        crate::error::check_len("lambda", self.lam.len(), prob.ne())?;
        crate::error::check_len("nu", self.nu.len(), prob.ni())
    }
}

/// Penalty parameters and tolerances of the current BCL subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyState {
    pub mu_e: f64,
    pub mu_i: f64,
    pub rho: f64,
    /// Inner tolerance ω_l.
    pub omega: f64,
    /// Primal feasibility tolerance ε_l.
    pub eps: f64,
    /// Last primal infeasibility η_l.
    pub eta: f64,
}

impl PenaltyState {
    pub fn initial(bcl: &BclParams, eta0: f64) -> Self {
        Self {
            mu_e: bcl.mu_e0.max(bcl.mu_e_floor),
            mu_i: bcl.mu_i0.max(bcl.mu_i_floor),
            rho: bcl.rho0,
            omega: bcl.omega0,
            eps: bcl.eps0,
            eta: eta0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_e > 0.0 && self.mu_i > 0.0 && self.rho >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "penalties must be positive (mu_e={}, mu_i={}, rho={})",
                self.mu_e, self.mu_i, self.rho
            )));
        }
        if !(self.omega > 0.0 && self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerances must be positive (omega={}, eps={})",
                self.omega, self.eps
            )));
        }
        Ok(())
    }
}

/// Hyper-parameters of the BCL outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct BclParams {
    pub mu_f: f64,
    pub alpha_bcl: f64,
    pub beta_bcl: f64,
    pub mu_e_floor: f64,
    pub mu_i_floor: f64,
    pub eps_abs: f64,
    pub omega0: f64,
    pub eps0: f64,
    /// Initial equality penalty μ_e (the inverse of a penalty weight).
    pub mu_e0: f64,
    /// Initial inequality penalty μ_i.
    pub mu_i0: f64,
    /// Initial proximal weight ρ.
    pub rho0: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
}

impl Default for BclParams {
    fn default() -> Self {
        Self {
            mu_f: 0.1,
            alpha_bcl: 0.1,
            beta_bcl: 0.9,
            mu_e_floor: 1e-9,
            mu_i_floor: 1e-9,
            eps_abs: 1e-8,
            omega0: 1.0,
            eps0: 1.0,
            mu_e0: 1e-2,
            mu_i0: 1e-2,
            rho0: 1e-6,
            max_outer_iters: 100,
            max_inner_iters: 200,
        }
    }
}

impl BclParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu_f", self.mu_f),
            ("mu_e_floor", self.mu_e_floor),
            ("mu_i_floor", self.mu_i_floor),
            ("eps_abs", self.eps_abs),
            ("omega0", self.omega0),
            ("eps0", self.eps0),
            ("mu_e0", self.mu_e0),
            ("mu_i0", self.mu_i0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rho0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("rho0 must be nonnegative, got {}", self.rho0)));
        }
        // With μ >= 1 the accept branch would never tighten ε or ω.
        for (name, v) in [("mu_e0", self.mu_e0), ("mu_i0", self.mu_i0)] {
            if v >= 1.0 {
                return Err(Error::InvalidParameter(format!("{name} must be < 1, got {v}")));
            }
        }
        if self.mu_f >= 1.0 {
            return Err(Error::InvalidParameter(format!("mu_f must be < 1, got {}", self.mu_f)));
        }
        for (name, v) in [("alpha_bcl", self.alpha_bcl), ("beta_bcl", self.beta_bcl)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::InvalidParameter("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// Armijo backtracking constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchParams {
    pub c1: f64,
    pub backtrack_factor: f64,
    pub alpha_min: f64,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            backtrack_factor: 0.5,
            alpha_min: 1e-7,
        }
    }
}

impl LineSearchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1 < 1.0)
            || !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0)
            || !(self.alpha_min > 0.0)
        {
            return Err(Error::InvalidParameter(format!("invalid line search parameters {self:?}")));
        }
        Ok(())
    }

    /// Trial step lengths in decreasing order: the powers `tᵏ ≥ alpha_min`,
    /// each interval `(tᵏ⁺¹, tᵏ)` preceded by the largest breakpoint it
    /// contains. Breakpoints are the step lengths at which an inactive
    /// inequality enters the active set; stopping exactly on one lets the
    /// next Newton step see the constraint instead of creeping towards it.
    pub fn trial_steps(&self, mut breakpoints: Vec<f64>) -> Vec<f64> {
        breakpoints.retain(|b| b.is_finite() && *b > self.alpha_min && *b < 1.0);
        breakpoints.sort_by(|a, b| b.total_cmp(a));
        let mut bp = breakpoints.into_iter().peekable();
        let mut out = Vec::new();
        let mut alpha = 1.0;
        while alpha >= self.alpha_min {
            out.push(alpha);
            let next = alpha * self.backtrack_factor;
            let mut first = None;
            while let Some(&b) = bp.peek() {
                if b <= next {
                    break;
                }
                first.get_or_insert(b);
                bp.next();
            }
            out.extend(first);
            alpha = next;
        }
        out
    }

    /// Armijo test, tolerant to rounding in the merit value itself.
    pub fn sufficient_decrease(&self, phi0: f64, slope: f64, alpha: f64, phi: f64) -> bool {
        phi.is_finite() && phi - phi0 - self.c1 * alpha * slope <= 10.0 * f64::EPSILON * phi0.abs()
    }
}

/// Inequality rows `j` with `ν_l,j + h_j(x)/μ_i >= 0`, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveSet {
    pub indices: Vec<usize>,
}

impl ActiveSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    /// Rows not in the set, among `0..ni`.
    pub fn complement(&self, ni: usize) -> Vec<usize> {
        (0..ni).filter(|&j| !self.contains(j)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub outer_iters: usize,
    pub total_inner_iters: usize,
    pub dual_inf: f64,
    pub primal_inf: f64,
    pub solution: NlpIterate,
    pub penalties: PenaltyState,
    pub trace: Vec<TraceRecord>,
}
