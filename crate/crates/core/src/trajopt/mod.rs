//! Constrained DDP for discrete optimal control problems
//!
//! ```text
//! min  Σ ℓ_k(x_k, u_k) + ℓ_N(x_N)
//! s.t. x_0 = x̄_0,  f_k(x_k, u_k, x_{k+1}) = 0,  h_k(x_k, u_k) <= 0,  h_N(x_N) <= 0
//! ```
//!
//! The solver minimizes the same proximal primal-dual merit as [`crate::nlp`]
//! on the stacked problem, but computes the Newton direction with a backward
//! recursion over small regularized stage KKT systems followed by a linear
//! rollout of the resulting affine policies.

mod backward;
mod eval;
mod forward;
mod solver;
mod stacked;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::nlp::PenaltyState;
use crate::report::{SolveStatus, TraceRecord};

pub use backward::{backward_pass, stage_q_params, BackwardPass, QParams, TerminalGains};
pub use eval::traj_merit;
pub use forward::{forward_linear_rollout, linesearch_and_accept, rollout_direction, LineSearchOutcome};
pub use solver::solve;
pub use stacked::{stacked_nlp_view, StackedNlp};

#[derive(Debug, Clone)]
pub struct CostDerivatives {
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    /// `∂²ℓ/∂u∂x`, `nu × nx`.
    pub lux: DMatrix<f64>,
    pub luu: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct DynamicsJacobians {
    pub fx: DMatrix<f64>,
    pub fu: DMatrix<f64>,
    /// Jacobian with respect to the next state `x'`.
    pub fy: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ConstraintJacobians {
    pub hx: DMatrix<f64>,
    pub hu: DMatrix<f64>,
}

/// One node `k < N` of the control problem. Dynamics are implicit,
/// `f(x, u, x') = 0` with `nx_next` rows.
pub trait StageModel: Send + Sync {
    fn nx(&self) -> usize;
    fn nu(&self) -> usize;
    fn nx_next(&self) -> usize;
    fn nh(&self) -> usize;

    fn cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64>;
    fn cost_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<CostDerivatives>;
    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>>;
    fn dynamics_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<DynamicsJacobians>;
    fn constraints(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>>;
    fn constraint_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<ConstraintJacobians>;

    /// Hessian of `λᵀf(x,u,y) + νᵀh(x,u)` in `z = (x, u, y)`. `None` when the
    /// constraints are affine or the curvature is not modelled.
    fn constraint_curvature(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _y: &DVector<f64>,
        _lam: &DVector<f64>,
        _nu: &DVector<f64>,
    ) -> Result<Option<DMatrix<f64>>> {
        Ok(None)
    }
}

pub trait TerminalModel: Send + Sync {
    fn nx(&self) -> usize;
    fn nh(&self) -> usize;
    fn cost(&self, x: &DVector<f64>) -> Result<f64>;
    /// `(ℓ_x, ℓ_xx)`.
    fn cost_derivatives(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>;
    fn constraints(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn constraint_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
    /// Hessian of `νᵀh_N(x)`.
    fn constraint_curvature(&self, _x: &DVector<f64>, _nu: &DVector<f64>) -> Result<Option<DMatrix<f64>>> {
        Ok(None)
    }
}

#[derive(Clone)]
pub struct TrajOptProblem {
    pub stages: Vec<Arc<dyn StageModel>>,
    pub terminal: Arc<dyn TerminalModel>,
    pub x0_bar: DVector<f64>,
}

impl std::fmt::Debug for TrajOptProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrajOptProblem")
            .field("horizon", &self.horizon())
            .field("x0_bar", &self.x0_bar)
            .finish()
    }
}

impl TrajOptProblem {
    pub fn new(
        stages: Vec<Arc<dyn StageModel>>,
        terminal: Arc<dyn TerminalModel>,
        x0_bar: DVector<f64>,
    ) -> Result<Self> {
        let p = Self {
            stages,
            terminal,
            x0_bar,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.stages.first() else {
            return Err(Error::Dimension("horizon must be at least one stage".into()));
        };
        check_len("x0_bar", self.x0_bar.len(), first.nx())?;
        for (k, w) in self.stages.windows(2).enumerate() {
            if w[0].nx_next() != w[1].nx() {
                return Err(Error::Dimension(format!(
                    "stage {k} produces {} states but stage {} expects {}",
                    w[0].nx_next(),
                    k + 1,
                    w[1].nx()
                )));
            }
        }
        check_len("terminal state", self.terminal.nx(), self.stages[self.horizon() - 1].nx_next())
    }

    /// State dimension at node `k`, `0 <= k <= N`.
    pub fn nx_at(&self, k: usize) -> usize {
        if k < self.horizon() {
            self.stages[k].nx()
        } else {
            self.terminal.nx()
        }
    }

    /// Inequality count at node `k`, `0 <= k <= N`.
    pub fn nh_at(&self, k: usize) -> usize {
        if k < self.horizon() {
            self.stages[k].nh()
        } else {
            self.terminal.nh()
        }
    }
}

/// Primal-dual trajectory. `lams[0]` pairs with `x_0 = x̄_0` and `lams[k+1]`
/// with `f_k`; `nus[k]` pairs with `h_k` and `nus[N]` with `h_N`.
///
/// The same layout is reused for directions, gradients and for the BCL
/// anchor (proximal center plus multiplier estimates).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub xs: Vec<DVector<f64>>,
    pub us: Vec<DVector<f64>>,
    pub lams: Vec<DVector<f64>>,
    pub nus: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn zeros(problem: &TrajOptProblem) -> Self {
        let n = problem.horizon();
        Self {
            xs: (0..=n).map(|k| DVector::zeros(problem.nx_at(k))).collect(),
            us: problem.stages.iter().map(|s| DVector::zeros(s.nu())).collect(),
            lams: (0..=n).map(|k| DVector::zeros(problem.nx_at(k))).collect(),
            nus: (0..=n).map(|k| DVector::zeros(problem.nh_at(k))).collect(),
        }
    }

    /// Zero controls and multipliers, every state equal to `x̄_0`. Requires
    /// a constant state dimension.
    pub fn from_initial_state(problem: &TrajOptProblem) -> Result<Self> {
        let mut t = Self::zeros(problem);
        for x in t.xs.iter_mut() {
            check_len("state", x.len(), problem.x0_bar.len())?;
            x.copy_from(&problem.x0_bar);
        }
        Ok(t)
    }

    /// Zero multipliers, given primal trajectory.
    pub fn from_primal(problem: &TrajOptProblem, xs: Vec<DVector<f64>>, us: Vec<DVector<f64>>) -> Result<Self> {
        let mut t = Self::zeros(problem);
        t.xs = xs;
        t.us = us;
        t.check_dims(problem)?;
        Ok(t)
    }

    pub fn horizon(&self) -> usize {
        self.us.len()
    }

    pub fn check_dims(&self, problem: &TrajOptProblem) -> Result<()> {
        let n = problem.horizon();
        if self.xs.len() != n + 1 || self.us.len() != n || self.lams.len() != n + 1 || self.nus.len() != n + 1 {
            return Err(Error::Dimension(format!(
                "trajectory has {} states, {} controls, {} co-states, {} path multipliers for horizon {n}",
                self.xs.len(),
                self.us.len(),
                self.lams.len(),
                self.nus.len()
            )));
        }
        for k in 0..=n {
            check_len("x_k", self.xs[k].len(), problem.nx_at(k))?;
            check_len("lambda_k", self.lams[k].len(), problem.nx_at(k))?;
            check_len("nu_k", self.nus[k].len(), problem.nh_at(k))?;
        }
        for (k, s) in problem.stages.iter().enumerate() {
            check_len("u_k", self.us[k].len(), s.nu())?;
        }
        Ok(())
    }

    /// `self + alpha * dir`, every block scaled by the same `alpha`.
    pub fn axpy(&self, alpha: f64, dir: &Trajectory) -> Trajectory {
        let add = |a: &[DVector<f64>], b: &[DVector<f64>]| -> Vec<DVector<f64>> {
            a.iter().zip(b).map(|(a, b)| a + alpha * b).collect()
        };
        Trajectory {
            xs: add(&self.xs, &dir.xs),
            us: add(&self.us, &dir.us),
            lams: add(&self.lams, &dir.lams),
            nus: add(&self.nus, &dir.nus),
        }
    }

    pub fn dot(&self, other: &Trajectory) -> f64 {
        let d = |a: &[DVector<f64>], b: &[DVector<f64>]| a.iter().zip(b).map(|(a, b)| a.dot(b)).sum::<f64>();
        d(&self.xs, &other.xs) + d(&self.us, &other.us) + d(&self.lams, &other.lams) + d(&self.nus, &other.nus)
    }

    pub fn inf_norm(&self) -> f64 {
        self.xs
            .iter()
            .chain(&self.us)
            .chain(&self.lams)
            .chain(&self.nus)
            .fold(0.0_f64, |m, v| m.max(crate::linalg::inf_norm(v)))
    }

    /// `max(‖xs − other.xs‖_∞, ‖us − other.us‖_∞)`.
    pub fn primal_distance(&self, other: &Trajectory) -> f64 {
        self.xs
            .iter()
            .zip(&other.xs)
            .chain(self.us.iter().zip(&other.us))
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).amax()))
    }
}

/// Affine policies of one stage: `δu = k + Kδx`, `δx' = a + Aδx`,
/// `δλ' = ξ + Ξδx`, `δν_A = ζ + Zδx`.
#[derive(Debug, Clone)]
pub struct StageGains {
    pub k_ff: DVector<f64>,
    pub k_fb: DMatrix<f64>,
    pub a_ff: DVector<f64>,
    pub a_fb: DMatrix<f64>,
    pub xi_ff: DVector<f64>,
    pub xi_fb: DMatrix<f64>,
    pub zeta_ff: DVector<f64>,
    pub z_fb: DMatrix<f64>,
    /// Active rows of `h_k`, ascending; `zeta_ff`/`z_fb` are indexed by them.
    pub active: Vec<usize>,
}

/// Local quadratic model `½δxᵀVxxδx + Vxᵀδx` of the tail at one node.
#[derive(Debug, Clone)]
pub struct ValueModel {
    pub vx: DVector<f64>,
    pub vxx: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct TrajSolveReport {
    pub status: SolveStatus,
    pub outer_iters: usize,
    pub total_inner_iters: usize,
    /// `‖∇L‖_∞` over every primal block.
    pub dual_inf: f64,
    /// `max(‖x_0 − x̄_0‖, ‖f_k‖, ‖[h_k]_+‖)` in the ∞-norm.
    pub primal_inf: f64,
    pub penalties: PenaltyState,
    pub trace: Vec<TraceRecord>,
    /// Stage factorizations that needed a primal shift.
    pub regularizations: usize,
    /// Backward passes redone after raising ρ.
    pub rho_escalations: usize,
    pub factorizations: usize,
    /// Largest `‖Kw − rhs‖_∞ / (1 + ‖rhs‖_∞)` over all factorizations.
    pub max_kkt_residual: f64,
}
