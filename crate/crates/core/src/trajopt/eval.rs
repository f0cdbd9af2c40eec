//! Node-wise evaluation of the stacked merit, its gradient and residuals.

use nalgebra::{DMatrix, DVector};

use super::{ConstraintJacobians, CostDerivatives, DynamicsJacobians, TrajOptProblem, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::linalg::{inf_norm, mask_entries, pos_part};
use crate::nlp::PenaltyState;

#[derive(Debug, Clone)]
pub(crate) struct StageDerivs {
    pub cost: CostDerivatives,
    pub dyn_: DynamicsJacobians,
    pub con: ConstraintJacobians,
}

#[derive(Debug, Clone)]
pub(crate) struct StageEval {
    pub cost: f64,
    pub f: DVector<f64>,
    pub h: DVector<f64>,
    pub d: Option<StageDerivs>,
}

#[derive(Debug, Clone)]
pub(crate) struct TerminalDerivs {
    pub lx: DVector<f64>,
    pub lxx: DMatrix<f64>,
    pub hx: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct TerminalEval {
    pub cost: f64,
    pub h: DVector<f64>,
    pub d: Option<TerminalDerivs>,
}

#[derive(Debug, Clone)]
pub(crate) struct TrajEval {
    pub stages: Vec<StageEval>,
    pub terminal: TerminalEval,
    /// `x_0 − x̄_0`.
    pub c0: DVector<f64>,
}

fn finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Model(format!("{what} is not finite ({v})")))
    }
}

fn check_shape(what: &str, m: &DMatrix<f64>, shape: (usize, usize)) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::Dimension(format!("{what} is {:?}, expected {shape:?}", m.shape())));
    }
    Ok(())
}

impl TrajEval {
    pub fn new(problem: &TrajOptProblem, traj: &Trajectory, derivs: bool) -> Result<Self> {
        let n = problem.horizon();
        let mut stages = Vec::with_capacity(n);
        for (k, s) in problem.stages.iter().enumerate() {
            let (x, u, y) = (&traj.xs[k], &traj.us[k], &traj.xs[k + 1]);
            let cost = finite("stage cost", s.cost(x, u)?)?;
            let f = s.dynamics(x, u, y)?;
            let h = s.constraints(x, u)?;
            check_len("f_k", f.len(), s.nx_next())?;
            check_len("h_k", h.len(), s.nh())?;
            if !crate::linalg::all_finite(&f) || !crate::linalg::all_finite(&h) {
                return Err(Error::Model(format!("non-finite constraint values at stage {k}")));
            }
            let d = if derivs {
                let cost = s.cost_derivatives(x, u)?;
                let dyn_ = s.dynamics_jacobians(x, u, y)?;
                let con = s.constraint_jacobians(x, u)?;
                let (nx, nu, ny, nh) = (s.nx(), s.nu(), s.nx_next(), s.nh());
                check_len("l_x", cost.lx.len(), nx)?;
                check_len("l_u", cost.lu.len(), nu)?;
                check_shape("l_xx", &cost.lxx, (nx, nx))?;
                check_shape("l_ux", &cost.lux, (nu, nx))?;
                check_shape("l_uu", &cost.luu, (nu, nu))?;
                check_shape("f_x", &dyn_.fx, (ny, nx))?;
                check_shape("f_u", &dyn_.fu, (ny, nu))?;
                check_shape("f_y", &dyn_.fy, (ny, ny))?;
                check_shape("h_x", &con.hx, (nh, nx))?;
                check_shape("h_u", &con.hu, (nh, nu))?;
                Some(StageDerivs { cost, dyn_, con })
            } else {
                None
            };
            stages.push(StageEval { cost, f, h, d });
        }

        let t = &problem.terminal;
        let xn = &traj.xs[n];
        let cost = finite("terminal cost", t.cost(xn)?)?;
        let h = t.constraints(xn)?;
        check_len("h_N", h.len(), t.nh())?;
        let d = if derivs {
            let (lx, lxx) = t.cost_derivatives(xn)?;
            let hx = t.constraint_jacobian(xn)?;
            check_len("terminal l_x", lx.len(), t.nx())?;
            check_shape("terminal l_xx", &lxx, (t.nx(), t.nx()))?;
            check_shape("h_N,x", &hx, (t.nh(), t.nx()))?;
            Some(TerminalDerivs { lx, lxx, hx })
        } else {
            None
        };

        Ok(Self {
            stages,
            terminal: TerminalEval { cost, h, d },
            c0: &traj.xs[0] - &problem.x0_bar,
        })
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// Equality block `i`: `x_0 − x̄_0` for `i = 0`, `f_{i−1}` otherwise.
    pub fn eq(&self, i: usize) -> &DVector<f64> {
        if i == 0 {
            &self.c0
        } else {
            &self.stages[i - 1].f
        }
    }

    /// Inequality block `k`: `h_k`, or `h_N` for `k = N`.
    pub fn ineq(&self, k: usize) -> &DVector<f64> {
        if k < self.horizon() {
            &self.stages[k].h
        } else {
            &self.terminal.h
        }
    }

    pub fn primal_infeasibility(&self) -> f64 {
        (0..=self.horizon())
            .map(|i| inf_norm(self.eq(i)).max(inf_norm(&pos_part(self.ineq(i)))))
            .fold(0.0, f64::max)
    }

    pub fn objective(&self) -> f64 {
        self.stages.iter().map(|s| s.cost).sum::<f64>() + self.terminal.cost
    }

    pub fn lam_hat(&self, anchor: &Trajectory, mu_e: f64) -> Vec<DVector<f64>> {
        (0..=self.horizon())
            .map(|i| &anchor.lams[i] + self.eq(i) / mu_e)
            .collect()
    }

    pub fn nu_hat(&self, anchor: &Trajectory, mu_i: f64) -> Vec<DVector<f64>> {
        (0..=self.horizon())
            .map(|k| pos_part(&(&anchor.nus[k] + self.ineq(k) / mu_i)))
            .collect()
    }

    pub fn active_sets(&self, anchor: &Trajectory, mu_i: f64) -> Vec<Vec<usize>> {
        (0..=self.horizon())
            .map(|k| {
                let h = self.ineq(k);
                (0..h.len())
                    .filter(|&j| anchor.nus[k][j] + h[j] / mu_i >= 0.0)
                    .collect()
            })
            .collect()
    }

    /// Step lengths at which an inactive path constraint becomes active
    /// along `dir`, from the linearized constraints.
    pub fn activity_breakpoints(&self, dir: &Trajectory, anchor: &Trajectory, mu_i: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 0..=self.horizon() {
            let dh = if k < self.horizon() {
                let c = &self.derivs(k).con;
                &c.hx * &dir.xs[k] + &c.hu * &dir.us[k]
            } else {
                &self.terminal_derivs().hx * &dir.xs[k]
            };
            let h = self.ineq(k);
            for j in 0..h.len() {
                let s = anchor.nus[k][j] + h[j] / mu_i;
                if s < 0.0 && dh[j] > 0.0 {
                    out.push(-s * mu_i / dh[j]);
                }
            }
        }
        out
    }

    pub fn merit(&self, traj: &Trajectory, anchor: &Trajectory, pen: &PenaltyState) -> f64 {
        let lam_hat = self.lam_hat(anchor, pen.mu_e);
        let nu_hat = self.nu_hat(anchor, pen.mu_i);
        let mut m = self.objective();
        for i in 0..=self.horizon() {
            m += 0.5 * pen.mu_e * (lam_hat[i].norm_squared() + (&lam_hat[i] - &traj.lams[i]).norm_squared());
            m += 0.5 * pen.mu_i * (nu_hat[i].norm_squared() + (&nu_hat[i] - &traj.nus[i]).norm_squared());
        }
        let prox: f64 = traj
            .xs
            .iter()
            .zip(&anchor.xs)
            .chain(traj.us.iter().zip(&anchor.us))
            .map(|(a, b)| (a - b).norm_squared())
            .sum();
        m + 0.5 * pen.rho * prox
    }

    fn derivs(&self, k: usize) -> &StageDerivs {
        self.stages[k].d.as_ref().expect("derivatives not evaluated")
    }

    fn terminal_derivs(&self) -> &TerminalDerivs {
        self.terminal.d.as_ref().expect("derivatives not evaluated")
    }

    /// `∇ℓ + Σ Jcᵀ lam_w + Σ Jhᵀ nu_w` per primal block, as `(xs, us)`.
    pub fn primal_gradient(
        &self,
        lam_w: &[DVector<f64>],
        nu_w: &[DVector<f64>],
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let n = self.horizon();
        let mut gx = Vec::with_capacity(n + 1);
        let mut gu = Vec::with_capacity(n);
        for k in 0..n {
            let d = self.derivs(k);
            let mut g = &d.cost.lx + d.dyn_.fx.tr_mul(&lam_w[k + 1]) + d.con.hx.tr_mul(&nu_w[k]);
            if k == 0 {
                g += &lam_w[0];
            } else {
                g += self.derivs(k - 1).dyn_.fy.tr_mul(&lam_w[k]);
            }
            gx.push(g);
            gu.push(&d.cost.lu + d.dyn_.fu.tr_mul(&lam_w[k + 1]) + d.con.hu.tr_mul(&nu_w[k]));
        }
        let t = self.terminal_derivs();
        gx.push(&t.lx + self.derivs(n - 1).dyn_.fy.tr_mul(&lam_w[n]) + t.hx.tr_mul(&nu_w[n]));
        (gx, gu)
    }

    /// `‖∇L(x, λ, ν)‖_∞` over every primal block.
    pub fn dual_infeasibility(&self, traj: &Trajectory) -> f64 {
        let (gx, gu) = self.primal_gradient(&traj.lams, &traj.nus);
        gx.iter().chain(&gu).fold(0.0, |m, g| m.max(inf_norm(g)))
    }

    pub fn complementarity(&self, traj: &Trajectory) -> f64 {
        (0..=self.horizon()).fold(0.0_f64, |m, k| {
            m.max(crate::nlp::complementarity_measure(self.ineq(k), &traj.nus[k]))
        })
    }

    /// Gradient of [`TrajEval::merit`], laid out as a trajectory.
    pub fn merit_gradient(&self, traj: &Trajectory, anchor: &Trajectory, pen: &PenaltyState) -> Trajectory {
        let lam_hat = self.lam_hat(anchor, pen.mu_e);
        let nu_hat = self.nu_hat(anchor, pen.mu_i);
        let active = self.active_sets(anchor, pen.mu_i);
        let lam_w: Vec<_> = lam_hat.iter().zip(&traj.lams).map(|(h, l)| 2.0 * h - l).collect();
        let nu_w: Vec<_> = (0..nu_hat.len())
            .map(|k| mask_entries(&(2.0 * &nu_hat[k] - &traj.nus[k]), &active[k]))
            .collect();
        let (mut gx, mut gu) = self.primal_gradient(&lam_w, &nu_w);
        add_prox(&mut gx, &mut gu, traj, anchor, pen.rho);
        Trajectory {
            xs: gx,
            us: gu,
            lams: lam_hat.iter().zip(&traj.lams).map(|(h, l)| pen.mu_e * (l - h)).collect(),
            nus: nu_hat.iter().zip(&traj.nus).map(|(h, n)| pen.mu_i * (n - h)).collect(),
        }
    }

    /// Subproblem optimality residual laid out as a trajectory.
    pub fn rl_residual(&self, traj: &Trajectory, anchor: &Trajectory, pen: &PenaltyState) -> Trajectory {
        let (mut gx, mut gu) = self.primal_gradient(&traj.lams, &traj.nus);
        add_prox(&mut gx, &mut gu, traj, anchor, pen.rho);
        let lam_hat = self.lam_hat(anchor, pen.mu_e);
        let nu_hat = self.nu_hat(anchor, pen.mu_i);
        Trajectory {
            xs: gx,
            us: gu,
            lams: lam_hat.iter().zip(&traj.lams).map(|(h, l)| pen.mu_e * (h - l)).collect(),
            nus: nu_hat.iter().zip(&traj.nus).map(|(h, n)| pen.mu_i * (h - n)).collect(),
        }
    }
}

fn add_prox(
    gx: &mut [DVector<f64>],
    gu: &mut [DVector<f64>],
    traj: &Trajectory,
    anchor: &Trajectory,
    rho: f64,
) {
    for (k, g) in gx.iter_mut().enumerate() {
        *g += rho * (&traj.xs[k] - &anchor.xs[k]);
    }
    for (k, g) in gu.iter_mut().enumerate() {
        *g += rho * (&traj.us[k] - &anchor.us[k]);
    }
}

/// Proximal primal-dual merit of `traj` for the subproblem anchored at
/// `anchor` (proximal center and multiplier estimates). Equals the merit of
/// the stacked NLP.
pub fn traj_merit(
    problem: &TrajOptProblem,
    traj: &Trajectory,
    anchor: &Trajectory,
    pen: &PenaltyState,
) -> Result<f64> {
    traj.check_dims(problem)?;
    anchor.check_dims(problem)?;
    Ok(TrajEval::new(problem, traj, false)?.merit(traj, anchor, pen))
}
