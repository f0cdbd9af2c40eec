//! Semi-smooth primal-dual Newton step on the proximal merit.
//!
//! ```text
//! [ H + ρI   Jcᵀ     J_Aᵀ  ] [δx ]     [ ∇f + Jcᵀλ + J_Aᵀν_A + ρ(x − x_l) ]
//! [ Jc      −μe I    0     ] [δλ ] = − [ c + μe(λ_l − λ)                  ]
//! [ J_A      0     −μi I   ] [δν_A]    [ (h + μi(ν_l − ν))_A              ]
//! ```
//!
//! Rows outside the active set get `δν_j = −ν_j`. With the active set frozen
//! this is exactly Newton's method on the merit, so a primal block with the
//! right inertia yields a descent direction.

use nalgebra::{DMatrix, DVector};

use super::merit::NlpEval;
use super::{ActiveSet, HessianMode, NlpIterate, NlpProblem, PenaltyState};
use crate::error::{Error, Result};
use crate::kkt::{regularize_until_correct, solve_residual, InertiaCorrector, InertiaRecord, SaddleSystem};
use crate::linalg::{inf_norm, mask_entries, select_entries, select_rows, symmetrize};

#[derive(Debug, Clone)]
pub struct NewtonStep {
    pub dx: DVector<f64>,
    pub dlam: DVector<f64>,
    /// Full length `ni`; inactive rows hold `−ν_j`.
    pub dnu: DVector<f64>,
    pub active: ActiveSet,
    pub record: InertiaRecord,
    /// `‖K w − rhs‖_∞` of the factored system.
    pub residual: f64,
    /// `‖rhs‖_∞`.
    pub rhs_norm: f64,
}

impl NewtonStep {
    /// `(δx, δλ, δν)` stacked.
    pub fn stacked(&self) -> DVector<f64> {
        let (n, ne, ni) = (self.dx.len(), self.dlam.len(), self.dnu.len());
        let mut w = DVector::zeros(n + ne + ni);
        w.rows_mut(0, n).copy_from(&self.dx);
        w.rows_mut(n, ne).copy_from(&self.dlam);
        w.rows_mut(n + ne, ni).copy_from(&self.dnu);
        w
    }
}

/// Primal Hessian block (without ρ) for the given mode.
#[allow(clippy::too_many_arguments)]
pub(crate) fn primal_hessian<P: NlpProblem + ?Sized>(
    prob: &P,
    ev: &NlpEval,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    nu: &DVector<f64>,
    center: &NlpIterate,
    pen: &PenaltyState,
    active: &ActiveSet,
    mode: HessianMode,
) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut h = match mode {
        HessianMode::Exact => {
            let lam_w = 2.0 * ev.lam_hat(&center.lam, pen.mu_e) - lam;
            let nu_w = mask_entries(&(2.0 * ev.nu_hat(&center.nu, pen.mu_i) - nu), &active.indices);
            prob.lagrangian_hessian(x, &lam_w, &nu_w)?
        }
        HessianMode::GaussNewton => {
            prob.lagrangian_hessian(x, &DVector::zeros(lam.len()), &DVector::zeros(nu.len()))?
        }
        HessianMode::ScaledIdentity(s) => DMatrix::identity(n, n) * s,
    };
    if h.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "lagrangian hessian is {:?}, expected {:?}",
            h.shape(),
            (n, n)
        )));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model("lagrangian hessian is not finite".into()));
    }
    symmetrize(&mut h);
    Ok(h)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn newton_from_eval<P: NlpProblem + ?Sized>(
    prob: &P,
    ev: &NlpEval,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    nu: &DVector<f64>,
    center: &NlpIterate,
    pen: &PenaltyState,
    mode: HessianMode,
    corrector: &mut InertiaCorrector,
    extra_delta: f64,
) -> Result<NewtonStep> {
    let (n, ne, ni) = (x.len(), lam.len(), nu.len());
    let active = ev.active_set(&center.nu, pen.mu_i);
    let na = active.len();

    let mut h = primal_hessian(prob, ev, x, lam, nu, center, pen, &active, mode)?;
    for i in 0..n {
        h[(i, i)] += pen.rho + extra_delta;
    }
    let ja = select_rows(ev.jh(), &active.indices);
    let nu_a = select_entries(nu, &active.indices);

    let gx = ev.grad() + ev.jc().tr_mul(lam) + ja.tr_mul(&nu_a) + pen.rho * (x - &center.x);
    let re = &ev.c + pen.mu_e * (&center.lam - lam);
    let ri = select_entries(&(&ev.h + pen.mu_i * (&center.nu - nu)), &active.indices);

    let mut rhs = DMatrix::zeros(n + ne + na, 1);
    rhs.view_mut((0, 0), (n, 1)).copy_from(&(-gx));
    rhs.view_mut((n, 0), (ne, 1)).copy_from(&(-re));
    rhs.view_mut((n + ne, 0), (na, 1)).copy_from(&(-ri));

    let sys = SaddleSystem {
        h,
        jeq: ev.jc().clone(),
        jineq_active: ja,
        mu_e: pen.mu_e,
        mu_i: pen.mu_i,
        rhs,
    };
    let (sol, record, shifted) = regularize_until_correct(&sys, corrector)?;
    let residual = solve_residual(&shifted, 0.0, &sol);
    let rhs_norm = inf_norm(&sys.rhs.column(0).into_owned());

    let dx = sol.view((0, 0), (n, 1)).column(0).into_owned();
    let dlam = sol.view((n, 0), (ne, 1)).column(0).into_owned();
    let mut dnu = -nu.clone();
    for (k, &j) in active.indices.iter().enumerate() {
        dnu[j] = sol[(n + ne + k, 0)];
    }
    debug_assert_eq!(dnu.len(), ni);
    Ok(NewtonStep {
        dx,
        dlam,
        dnu,
        active,
        record,
        residual,
        rhs_norm,
    })
}

/// One regularized primal-dual Newton step with a fresh inertia corrector.
pub fn pd_newton_step<P: NlpProblem + ?Sized>(
    prob: &P,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    nu: &DVector<f64>,
    center: &NlpIterate,
    pen: &PenaltyState,
    mode: HessianMode,
) -> Result<NewtonStep> {
    pd_newton_step_with(prob, x, lam, nu, center, pen, mode, &mut InertiaCorrector::default(), 0.0)
}

/// As [`pd_newton_step`], reusing `corrector` and adding `extra_delta` to the
/// primal diagonal before inertia correction.
#[allow(clippy::too_many_arguments)]
pub fn pd_newton_step_with<P: NlpProblem + ?Sized>(
    prob: &P,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    nu: &DVector<f64>,
    center: &NlpIterate,
    pen: &PenaltyState,
    mode: HessianMode,
    corrector: &mut InertiaCorrector,
    extra_delta: f64,
) -> Result<NewtonStep> {
    NlpIterate::new(x.clone(), lam.clone(), nu.clone()).check_dims(prob)?;
    center.check_dims(prob)?;
    pen.validate()?;
    let ev = NlpEval::full(prob, x)?;
    newton_from_eval(prob, &ev, x, lam, nu, center, pen, mode, corrector, extra_delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::test_problems::constant_h;
    use crate::nlp::QuadraticProgram;

    fn pen(mu_e: f64, mu_i: f64, rho: f64) -> PenaltyState {
        PenaltyState {
            mu_e,
            mu_i,
            rho,
            omega: 1.0,
            eps: 1.0,
            eta: 0.0,
        }
    }

    fn eq_qp() -> QuadraticProgram {
        // ½‖x − (1,1)‖² s.t. x₁ + x₂ = 1.
        QuadraticProgram::new(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![-1.0, -1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 1.0),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .unwrap()
    }

    #[test]
    fn equality_qp_step_solves_regularized_system() {
        let qp = eq_qp();
        let x = DVector::from_vec(vec![3.0, -2.0]);
        let lam = DVector::from_element(1, 0.7);
        let center = NlpIterate::new(x.clone(), DVector::from_element(1, 0.2), DVector::zeros(0));
        let p = pen(1e-3, 1e-3, 0.0);
        let st = pd_newton_step(&qp, &x, &lam, &DVector::zeros(0), &center, &p, HessianMode::Exact).unwrap();
        // Oracle: dense inverse of the 3×3 system.
        let k = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, -1e-3]);
        let g = &qp.p * &x + &qp.q + qp.a.tr_mul(&lam);
        let c = &qp.a * &x - &qp.b;
        let rhs = -DVector::from_vec(vec![g[0], g[1], c[0] + 1e-3 * (0.2 - 0.7)]);
        let w = k.try_inverse().unwrap() * rhs;
        assert!((st.dx[0] - w[0]).abs() < 1e-12 && (st.dx[1] - w[1]).abs() < 1e-12);
        assert!((st.dlam[0] - w[2]).abs() < 1e-12);
    }

    #[test]
    fn inactive_rows_reset_multipliers() {
        let qp = constant_h(&[-1.0, -2.0]);
        let x = DVector::from_vec(vec![0.5, 0.5]);
        let nu = DVector::from_vec(vec![0.3, 0.1]);
        let center = NlpIterate::new(x.clone(), DVector::zeros(0), DVector::zeros(2));
        let st = pd_newton_step(&qp, &x, &DVector::zeros(0), &nu, &center, &pen(0.1, 0.1, 0.0), HessianMode::GaussNewton)
            .unwrap();
        assert!(st.active.is_empty());
        assert_eq!(st.dnu, -nu);
        assert!((st.dx + x).amax() < 1e-14);
    }

    #[test]
    fn nonconvex_hessian_gets_regularized() {
        let qp = QuadraticProgram::unconstrained(
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0])),
            DVector::from_vec(vec![0.1, 0.1]),
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.2, 0.3]);
        let center = NlpIterate::new(x.clone(), DVector::zeros(0), DVector::zeros(0));
        let st = pd_newton_step(&qp, &x, &DVector::zeros(0), &DVector::zeros(0), &center, &pen(0.1, 0.1, 0.0), HessianMode::Exact)
            .unwrap();
        assert!(st.record.delta > 1.0);
        let g = &qp.p * &x + &qp.q;
        assert!(g.dot(&st.dx) < 0.0);
    }
}
