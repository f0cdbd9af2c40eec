//! Backward recursion over the regularized stage KKT systems.
//!
//! At stage `k`, with `w = (δu, δx', δλ', δν_A)` and the tail value model
//! `V'`, the stage system reads `K w + B δx = −q` with
//!
//! ```text
//! K = [ Quu   Quy   fuᵀ   h_{u,A}ᵀ ]     B = [ Qux    ]     q = [ Qu                ]
//!     [ Qyu   Qyy   fyᵀ   0        ]         [ Qyx    ]         [ Qy                ]
//!     [ fu    fy   −μe I  0        ]         [ fx     ]         [ f + μe(λ_l − λ')  ]
//!     [ h_u,A 0     0    −μi I     ]         [ h_{x,A}]         [ (h + μi(ν_l − ν))_A ]
//! ```
//!
//! so `w = s + S δx` with `s = −K⁻¹q`, `S = −K⁻¹B`, and the value model at
//! `k` is `Vxx = Qxx + BᵀS`, `Vx = Qx + Bᵀs`.

use nalgebra::{DMatrix, DVector};

use super::eval::TrajEval;
use super::{StageGains, TrajOptProblem, Trajectory, ValueModel};
use crate::error::Result;
use crate::kkt::{regularize_until_correct, solve_residual, InertiaCorrector, SaddleSystem};
use crate::linalg::{inf_norm_mat, mask_entries, select_entries, select_rows, symmetrize};
use crate::nlp::{HessianMode, PenaltyState};

/// Derivatives of the stage Q-function, `y` standing for the next state.
#[derive(Debug, Clone)]
pub struct QParams {
    pub qx: DVector<f64>,
    pub qu: DVector<f64>,
    pub qy: DVector<f64>,
    pub qxx: DMatrix<f64>,
    pub qux: DMatrix<f64>,
    pub quu: DMatrix<f64>,
    pub qyx: DMatrix<f64>,
    pub qyu: DMatrix<f64>,
    pub qyy: DMatrix<f64>,
    pub active: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TerminalGains {
    pub zeta_ff: DVector<f64>,
    pub z_fb: DMatrix<f64>,
    pub active: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BackwardPass {
    pub gains: Vec<StageGains>,
    pub terminal: TerminalGains,
    /// Value models at nodes `0..=N`.
    pub values: Vec<ValueModel>,
    pub dx0: DVector<f64>,
    pub dlam0: DVector<f64>,
    /// Factorizations that needed a primal shift.
    pub regularizations: usize,
    pub factorizations: usize,
    /// Largest `‖Kw − rhs‖_∞ / (1 + ‖rhs‖_∞)` among the factorizations.
    pub max_residual: f64,
    /// Largest primal shift used.
    pub max_delta: f64,
}

#[allow(clippy::too_many_arguments)]
fn q_params_from_eval(
    problem: &TrajOptProblem,
    ev: &TrajEval,
    k: usize,
    next: &ValueModel,
    traj: &Trajectory,
    anchor: &Trajectory,
    pen: &PenaltyState,
    mode: HessianMode,
) -> Result<QParams> {
    let stage = &problem.stages[k];
    let se = &ev.stages[k];
    let d = se.d.as_ref().expect("derivatives not evaluated");
    let (nx, nu) = (stage.nx(), stage.nu());
    let (x, u, y) = (&traj.xs[k], &traj.us[k], &traj.xs[k + 1]);
    let lam = &traj.lams[k + 1];
    let nu_k = &traj.nus[k];

    let active: Vec<usize> = (0..se.h.len())
        .filter(|&j| anchor.nus[k][j] + se.h[j] / pen.mu_i >= 0.0)
        .collect();
    let nu_a = mask_entries(nu_k, &active);

    let qx = &d.cost.lx + d.dyn_.fx.tr_mul(lam) + d.con.hx.tr_mul(&nu_a) + pen.rho * (x - &anchor.xs[k]);
    let qu = &d.cost.lu + d.dyn_.fu.tr_mul(lam) + d.con.hu.tr_mul(&nu_a) + pen.rho * (u - &anchor.us[k]);
    let qy = d.dyn_.fy.tr_mul(lam) + &next.vx;

    let (mut qxx, mut qux, mut quu) = match mode {
        HessianMode::ScaledIdentity(s) => (
            DMatrix::identity(nx, nx) * s,
            DMatrix::zeros(nu, nx),
            DMatrix::identity(nu, nu) * s,
        ),
        _ => (d.cost.lxx.clone(), d.cost.lux.clone(), d.cost.luu.clone()),
    };
    let ny = y.len();
    let mut qyx = DMatrix::zeros(ny, nx);
    let mut qyu = DMatrix::zeros(ny, nu);
    let mut qyy = next.vxx.clone();

    if mode == HessianMode::Exact {
        let lam_w = 2.0 * (&anchor.lams[k + 1] + &se.f / pen.mu_e) - lam;
        let nu_hat = crate::linalg::pos_part(&(&anchor.nus[k] + &se.h / pen.mu_i));
        let nu_w = mask_entries(&(2.0 * nu_hat - nu_k), &active);
        if let Some(c) = stage.constraint_curvature(x, u, y, &lam_w, &nu_w)? {
            let nz = nx + nu + ny;
            if c.shape() != (nz, nz) {
                return Err(crate::Error::Dimension(format!(
                    "stage curvature is {:?}, expected {:?}",
                    c.shape(),
                    (nz, nz)
                )));
            }
            qxx += c.view((0, 0), (nx, nx));
            qux += c.view((nx, 0), (nu, nx));
            quu += c.view((nx, nx), (nu, nu));
            qyx += c.view((nx + nu, 0), (ny, nx));
            qyu += c.view((nx + nu, nx), (ny, nu));
            qyy += c.view((nx + nu, nx + nu), (ny, ny));
        }
    }
    for i in 0..nx {
        qxx[(i, i)] += pen.rho;
    }
    for i in 0..nu {
        quu[(i, i)] += pen.rho;
    }
    symmetrize(&mut qxx);
    symmetrize(&mut quu);
    symmetrize(&mut qyy);

    Ok(QParams {
        qx,
        qu,
        qy,
        qxx,
        qux,
        quu,
        qyx,
        qyu,
        qyy,
        active,
    })
}

/// Q-function derivatives of stage `k` around `traj`, given the value model
/// of node `k + 1`.
pub fn stage_q_params(
    problem: &TrajOptProblem,
    k: usize,
    next: &ValueModel,
    traj: &Trajectory,
    anchor: &Trajectory,
    pen: &PenaltyState,
    mode: HessianMode,
) -> Result<QParams> {
    traj.check_dims(problem)?;
    anchor.check_dims(problem)?;
    let ev = TrajEval::new(problem, traj, true)?;
    q_params_from_eval(problem, &ev, k, next, traj, anchor, pen, mode)
}

struct Tracker {
    regularizations: usize,
    factorizations: usize,
    max_residual: f64,
    max_delta: f64,
}

impl Tracker {
    fn solve(&mut self, sys: &SaddleSystem, corrector: &mut InertiaCorrector) -> Result<DMatrix<f64>> {
        let (sol, rec, shifted) = regularize_until_correct(sys, corrector)?;
        self.factorizations += 1;
        if rec.delta > 0.0 {
            self.regularizations += 1;
            self.max_delta = self.max_delta.max(rec.delta);
        }
        let r = solve_residual(&shifted, 0.0, &sol) / (1.0 + inf_norm_mat(&sys.rhs));
        self.max_residual = self.max_residual.max(r);
        Ok(sol)
    }
}

pub(crate) fn backward_from_eval(
    problem: &TrajOptProblem,
    ev: &TrajEval,
    traj: &Trajectory,
    anchor: &Trajectory,
    pen: &PenaltyState,
    mode: HessianMode,
    corrector: &mut InertiaCorrector,
) -> Result<BackwardPass> {
    let n = problem.horizon();
    let mut tr = Tracker {
        regularizations: 0,
        factorizations: 0,
        max_residual: 0.0,
        max_delta: 0.0,
    };

    // Terminal node: K = −μi I on the active rows, no primal block.
    let te = &ev.terminal;
    let td = te.d.as_ref().expect("derivatives not evaluated");
    let xn = &traj.xs[n];
    let t_active: Vec<usize> = (0..te.h.len())
        .filter(|&j| anchor.nus[n][j] + te.h[j] / pen.mu_i >= 0.0)
        .collect();
    let hxa = select_rows(&td.hx, &t_active);
    let nu_a = mask_entries(&traj.nus[n], &t_active);
    let qa = select_entries(&(&te.h + pen.mu_i * (&anchor.nus[n] - &traj.nus[n])), &t_active);
    let zeta_ff = &qa / pen.mu_i;
    let z_fb = &hxa / pen.mu_i;
    let mut vxx = td.lxx.clone();
    if mode == HessianMode::Exact {
        let nu_hat = crate::linalg::pos_part(&(&anchor.nus[n] + &te.h / pen.mu_i));
        let nu_w = mask_entries(&(2.0 * nu_hat - &traj.nus[n]), &t_active);
        if let Some(c) = problem.terminal.constraint_curvature(xn, &nu_w)? {
            vxx += c;
        }
    }
    if let HessianMode::ScaledIdentity(s) = mode {
        vxx = DMatrix::identity(xn.len(), xn.len()) * s;
    }
    for i in 0..xn.len() {
        vxx[(i, i)] += pen.rho;
    }
    vxx += hxa.tr_mul(&z_fb);
    symmetrize(&mut vxx);
    let vx = &td.lx + td.hx.tr_mul(&nu_a) + pen.rho * (xn - &anchor.xs[n]) + hxa.tr_mul(&zeta_ff);
    let terminal = TerminalGains {
        zeta_ff,
        z_fb,
        active: t_active,
    };

    let mut values = vec![ValueModel { vx, vxx }];
    let mut gains = Vec::with_capacity(n);

    for k in (0..n).rev() {
        let next = values.last().expect("value model");
        let q = q_params_from_eval(problem, ev, k, next, traj, anchor, pen, mode)?;
        let se = &ev.stages[k];
        let d = se.d.as_ref().expect("derivatives not evaluated");
        let (nx, nu, ny) = (traj.xs[k].len(), traj.us[k].len(), traj.xs[k + 1].len());
        let na = q.active.len();
        let np = nu + ny;

        let mut h = DMatrix::zeros(np, np);
        h.view_mut((0, 0), (nu, nu)).copy_from(&q.quu);
        h.view_mut((nu, 0), (ny, nu)).copy_from(&q.qyu);
        h.view_mut((0, nu), (nu, ny)).copy_from(&q.qyu.transpose());
        h.view_mut((nu, nu), (ny, ny)).copy_from(&q.qyy);
        let mut jeq = DMatrix::zeros(ny, np);
        jeq.view_mut((0, 0), (ny, nu)).copy_from(&d.dyn_.fu);
        jeq.view_mut((0, nu), (ny, ny)).copy_from(&d.dyn_.fy);
        let hua = select_rows(&d.con.hu, &q.active);
        let hxa = select_rows(&d.con.hx, &q.active);
        let mut ja = DMatrix::zeros(na, np);
        ja.view_mut((0, 0), (na, nu)).copy_from(&hua);

        let dim = np + ny + na;
        let mut qv = DVector::zeros(dim);
        qv.rows_mut(0, nu).copy_from(&q.qu);
        qv.rows_mut(nu, ny).copy_from(&q.qy);
        qv.rows_mut(np, ny)
            .copy_from(&(&se.f + pen.mu_e * (&anchor.lams[k + 1] - &traj.lams[k + 1])));
        qv.rows_mut(np + ny, na).copy_from(&select_entries(
            &(&se.h + pen.mu_i * (&anchor.nus[k] - &traj.nus[k])),
            &q.active,
        ));
        let mut b = DMatrix::zeros(dim, nx);
        b.view_mut((0, 0), (nu, nx)).copy_from(&q.qux);
        b.view_mut((nu, 0), (ny, nx)).copy_from(&q.qyx);
        b.view_mut((np, 0), (ny, nx)).copy_from(&d.dyn_.fx);
        b.view_mut((np + ny, 0), (na, nx)).copy_from(&hxa);

        let mut rhs = DMatrix::zeros(dim, 1 + nx);
        rhs.column_mut(0).copy_from(&(-&qv));
        rhs.view_mut((0, 1), (dim, nx)).copy_from(&(-&b));

        let sys = SaddleSystem {
            h,
            jeq,
            jineq_active: ja,
            mu_e: pen.mu_e,
            mu_i: pen.mu_i,
            rhs,
        };
        let sol = tr.solve(&sys, corrector)?;
        let s = sol.column(0).into_owned();
        let big_s = sol.view((0, 1), (dim, nx)).into_owned();

        let mut vxx = &q.qxx + b.tr_mul(&big_s);
        symmetrize(&mut vxx);
        let vx = &q.qx + b.tr_mul(&s);
        values.push(ValueModel { vx, vxx });

        gains.push(StageGains {
            k_ff: s.rows(0, nu).into_owned(),
            k_fb: big_s.rows(0, nu).into_owned(),
            a_ff: s.rows(nu, ny).into_owned(),
            a_fb: big_s.rows(nu, ny).into_owned(),
            xi_ff: s.rows(np, ny).into_owned(),
            xi_fb: big_s.rows(np, ny).into_owned(),
            zeta_ff: s.rows(np + ny, na).into_owned(),
            z_fb: big_s.rows(np + ny, na).into_owned(),
            active: q.active,
        });
    }
    gains.reverse();
    values.reverse();

    // Initial node: [[V0xx, I], [I, −μe I]] (δx0, δλ0) = −(V0x + λ0, x0 − x̄0 + μe(λ_l0 − λ0)).
    let nx0 = traj.xs[0].len();
    let v0 = &values[0];
    let mut rhs = DMatrix::zeros(2 * nx0, 1);
    rhs.view_mut((0, 0), (nx0, 1)).copy_from(&(-(&v0.vx + &traj.lams[0])));
    rhs.view_mut((nx0, 0), (nx0, 1))
        .copy_from(&(-(&ev.c0 + pen.mu_e * (&anchor.lams[0] - &traj.lams[0]))));
    let sys = SaddleSystem {
        h: v0.vxx.clone(),
        jeq: DMatrix::identity(nx0, nx0),
        jineq_active: DMatrix::zeros(0, nx0),
        mu_e: pen.mu_e,
        mu_i: pen.mu_i,
        rhs,
    };
    let sol = tr.solve(&sys, corrector)?;
    let dx0 = sol.view((0, 0), (nx0, 1)).column(0).into_owned();
    let dlam0 = sol.view((nx0, 0), (nx0, 1)).column(0).into_owned();

    Ok(BackwardPass {
        gains,
        terminal,
        values,
        dx0,
        dlam0,
        regularizations: tr.regularizations,
        factorizations: tr.factorizations,
        max_residual: tr.max_residual,
        max_delta: tr.max_delta,
    })
}

/// Backward sweep from `N` down to the initial node. `anchor` carries the
/// proximal center and the multiplier estimates `(λ_l, ν_l)`.
pub fn backward_pass(
    problem: &TrajOptProblem,
    traj: &Trajectory,
    anchor: &Trajectory,
    pen: &PenaltyState,
    mode: HessianMode,
    corrector: &mut InertiaCorrector,
) -> Result<BackwardPass> {
    traj.check_dims(problem)?;
    anchor.check_dims(problem)?;
    pen.validate()?;
    let ev = TrajEval::new(problem, traj, true)?;
    backward_from_eval(problem, &ev, traj, anchor, pen, mode, corrector)
}
