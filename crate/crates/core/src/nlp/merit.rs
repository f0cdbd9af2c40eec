//! Lagrangian, KKT residuals and the proximal primal-dual merit function.
//!
//! With the shifted multipliers `λ̂ = λ_l + c/μ_e` and `ν̂ = [ν_l + h/μ_i]_+`
//! the merit reads
//!
//! ```text
//! M(x,λ,ν) = f + μ_e/2 (‖λ̂‖² + ‖λ̂ − λ‖²) + μ_i/2 (‖ν̂‖² + ‖ν̂ − ν‖²) + ρ/2 ‖x − x_l‖²
//! ```

use nalgebra::{DMatrix, DVector};

use super::{ActiveSet, NlpIterate, NlpProblem, PenaltyState};
use crate::error::{check_len, Error, Result};
use crate::linalg::{inf_norm, pos_part};

/// Problem functions (and optionally derivatives) evaluated at one point.
#[derive(Debug, Clone)]
pub struct NlpEval {
    pub f: f64,
    pub c: DVector<f64>,
    pub h: DVector<f64>,
    pub grad: Option<DVector<f64>>,
    pub jc: Option<DMatrix<f64>>,
    pub jh: Option<DMatrix<f64>>,
}

impl NlpEval {
    pub fn values<P: NlpProblem + ?Sized>(prob: &P, x: &DVector<f64>) -> Result<Self> {
        check_len("x", x.len(), prob.n())?;
        let f = prob.objective(x)?;
        let c = prob.equalities(x)?;
        let h = prob.inequalities(x)?;
        check_len("c(x)", c.len(), prob.ne())?;
        check_len("h(x)", h.len(), prob.ni())?;
        if !f.is_finite() {
            return Err(Error::Model(format!("objective is not finite ({f})")));
        }
        Ok(Self {
            f,
            c,
            h,
            grad: None,
            jc: None,
            jh: None,
        })
    }

    pub fn full<P: NlpProblem + ?Sized>(prob: &P, x: &DVector<f64>) -> Result<Self> {
        let mut ev = Self::values(prob, x)?;
        let (n, ne, ni) = (prob.n(), prob.ne(), prob.ni());
        let grad = prob.gradient(x)?;
        let jc = prob.equality_jacobian(x)?;
        let jh = prob.inequality_jacobian(x)?;
        check_len("grad f", grad.len(), n)?;
        if jc.shape() != (ne, n) || jh.shape() != (ni, n) {
            return Err(Error::Dimension(format!(
                "jacobians: Jc {:?} (expected {:?}), Jh {:?} (expected {:?})",
                jc.shape(),
                (ne, n),
                jh.shape(),
                (ni, n)
            )));
        }
        ev.grad = Some(grad);
        ev.jc = Some(jc);
        ev.jh = Some(jh);
        Ok(ev)
    }

    pub(crate) fn grad(&self) -> &DVector<f64> {
        self.grad.as_ref().expect("derivatives not evaluated")
    }

    pub(crate) fn jc(&self) -> &DMatrix<f64> {
        self.jc.as_ref().expect("derivatives not evaluated")
    }

    pub(crate) fn jh(&self) -> &DMatrix<f64> {
        self.jh.as_ref().expect("derivatives not evaluated")
    }

    pub fn primal_infeasibility(&self) -> f64 {
        inf_norm(&self.c).max(inf_norm(&pos_part(&self.h)))
    }

    /// `∇f + Jcᵀλ + Jhᵀν`.
    pub fn lagrangian_gradient(&self, lam: &DVector<f64>, nu: &DVector<f64>) -> DVector<f64> {
        self.grad() + self.jc().tr_mul(lam) + self.jh().tr_mul(nu)
    }

    pub fn lam_hat(&self, lam_l: &DVector<f64>, mu_e: f64) -> DVector<f64> {
        lam_l + &self.c / mu_e
    }

    pub fn nu_hat(&self, nu_l: &DVector<f64>, mu_i: f64) -> DVector<f64> {
        pos_part(&(nu_l + &self.h / mu_i))
    }

    pub fn active_set(&self, nu_l: &DVector<f64>, mu_i: f64) -> ActiveSet {
        ActiveSet {
            indices: (0..self.h.len())
                .filter(|&j| nu_l[j] + self.h[j] / mu_i >= 0.0)
                .collect(),
        }
    }

    pub fn merit(
        &self,
        x: &DVector<f64>,
        lam: &DVector<f64>,
        nu: &DVector<f64>,
        center: &NlpIterate,
        pen: &PenaltyState,
    ) -> f64 {
        let lam_hat = self.lam_hat(&center.lam, pen.mu_e);
        let nu_hat = self.nu_hat(&center.nu, pen.mu_i);
        self.f
            + 0.5 * pen.mu_e * (lam_hat.norm_squared() + (&lam_hat - lam).norm_squared())
            + 0.5 * pen.mu_i * (nu_hat.norm_squared() + (&nu_hat - nu).norm_squared())
            + 0.5 * pen.rho * (x - &center.x).norm_squared()
    }

    /// Gradient of [`NlpEval::merit`] in `(x, λ, ν)`, stacked.
    pub fn merit_gradient(
        &self,
        x: &DVector<f64>,
        lam: &DVector<f64>,
        nu: &DVector<f64>,
        center: &NlpIterate,
        pen: &PenaltyState,
    ) -> DVector<f64> {
        let (n, ne, ni) = (x.len(), lam.len(), nu.len());
        let lam_hat = self.lam_hat(&center.lam, pen.mu_e);
        let nu_hat = self.nu_hat(&center.nu, pen.mu_i);
        let active = self.active_set(&center.nu, pen.mu_i);

        let mut nu_w = DVector::zeros(ni);
        for &j in &active.indices {
            nu_w[j] = 2.0 * nu_hat[j] - nu[j];
        }
        let gx = self.grad()
            + self.jc().tr_mul(&(2.0 * &lam_hat - lam))
            + self.jh().tr_mul(&nu_w)
            + pen.rho * (x - &center.x);

        let mut g = DVector::zeros(n + ne + ni);
        g.rows_mut(0, n).copy_from(&gx);
        g.rows_mut(n, ne).copy_from(&(pen.mu_e * (lam - &lam_hat)));
        g.rows_mut(n + ne, ni).copy_from(&(pen.mu_i * (nu - &nu_hat)));
        g
    }

    pub fn rl_residual(
        &self,
        x: &DVector<f64>,
        lam: &DVector<f64>,
        nu: &DVector<f64>,
        center: &NlpIterate,
        pen: &PenaltyState,
    ) -> DVector<f64> {
        let (n, ne, ni) = (x.len(), lam.len(), nu.len());
        let gx = self.lagrangian_gradient(lam, nu) + pen.rho * (x - &center.x);
        let mut r = DVector::zeros(n + ne + ni);
        r.rows_mut(0, n).copy_from(&gx);
        r.rows_mut(n, ne)
            .copy_from(&(pen.mu_e * (self.lam_hat(&center.lam, pen.mu_e) - lam)));
        r.rows_mut(n + ne, ni)
            .copy_from(&(pen.mu_i * (self.nu_hat(&center.nu, pen.mu_i) - nu)));
        r
    }
}

fn check_point<P: NlpProblem + ?Sized>(
    prob: &P,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    nu: &DVector<f64>,
) -> Result<()> {
    check_len("x", x.len(), prob.n())?;
    check_len("lambda", lam.len(), prob.ne())?;
    check_len("nu", nu.len(), prob.ni())
}

/// `f(x) + λᵀc(x) + νᵀh(x)`.
pub fn lagrangian<P: NlpProblem + ?Sized>(
    prob: &P,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    nu: &DVector<f64>,
) -> Result<f64> {
    check_point(prob, x, lam, nu)?;
    let ev = NlpEval::values(prob, x)?;
    Ok(ev.f + lam.dot(&ev.c) + nu.dot(&ev.h))
}

/// `(‖∇ₓL‖_∞, ‖(c, [h]_+)‖_∞)`.
pub fn kkt_residuals<P: NlpProblem + ?Sized>(
    prob: &P,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    nu: &DVector<f64>,
) -> Result<(f64, f64)> {
    check_point(prob, x, lam, nu)?;
    let ev = NlpEval::full(prob, x)?;
    Ok((
        inf_norm(&ev.lagrangian_gradient(lam, nu)),
        ev.primal_infeasibility(),
    ))
}

pub fn primal_infeasibility<P: NlpProblem + ?Sized>(prob: &P, x: &DVector<f64>) -> Result<f64> {
    Ok(NlpEval::values(prob, x)?.primal_infeasibility())
}

/// `(λ̂, ν̂) = (λ_l + c/μ_e, [ν_l + h/μ_i]_+)`.
pub fn shifted_multipliers<P: NlpProblem + ?Sized>(
    prob: &P,
    x: &DVector<f64>,
    lam_l: &DVector<f64>,
    nu_l: &DVector<f64>,
    mu_e: f64,
    mu_i: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_point(prob, x, lam_l, nu_l)?;
    positive("mu_e", mu_e)?;
    positive("mu_i", mu_i)?;
    let ev = NlpEval::values(prob, x)?;
    Ok((ev.lam_hat(lam_l, mu_e), ev.nu_hat(nu_l, mu_i)))
}

/// The optimal slack `ẑ = [h + μ_i ν_l]_-`.
pub fn shifted_slack<P: NlpProblem + ?Sized>(
    prob: &P,
    x: &DVector<f64>,
    nu_l: &DVector<f64>,
    mu_i: f64,
) -> Result<DVector<f64>> {
    check_len("nu_l", nu_l.len(), prob.ni())?;
    positive("mu_i", mu_i)?;
    let ev = NlpEval::values(prob, x)?;
    Ok((&ev.h + mu_i * nu_l).map(|v| v.min(0.0)))
}

pub fn merit_value<P: NlpProblem + ?Sized>(
    prob: &P,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    nu: &DVector<f64>,
    center: &NlpIterate,
    pen: &PenaltyState,
) -> Result<f64> {
    check_point(prob, x, lam, nu)?;
    center.check_dims(prob)?;
    Ok(NlpEval::values(prob, x)?.merit(x, lam, nu, center, pen))
}

/// Gradient of [`merit_value`] stacked as `(∂x, ∂λ, ∂ν)`; the multiplier
/// blocks are `μ_e(λ − λ̂)` and `μ_i(ν − ν̂)`.
pub fn merit_gradient<P: NlpProblem + ?Sized>(
    prob: &P,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    nu: &DVector<f64>,
    center: &NlpIterate,
    pen: &PenaltyState,
) -> Result<DVector<f64>> {
    check_point(prob, x, lam, nu)?;
    center.check_dims(prob)?;
    Ok(NlpEval::full(prob, x)?.merit_gradient(x, lam, nu, center, pen))
}

pub fn active_set<P: NlpProblem + ?Sized>(
    prob: &P,
    x: &DVector<f64>,
    nu_l: &DVector<f64>,
    mu_i: f64,
) -> Result<ActiveSet> {
    check_len("nu_l", nu_l.len(), prob.ni())?;
    positive("mu_i", mu_i)?;
    Ok(NlpEval::values(prob, x)?.active_set(nu_l, mu_i))
}

/// Subproblem optimality residual and its infinity norm.
pub fn rl_residual<P: NlpProblem + ?Sized>(
    prob: &P,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    nu: &DVector<f64>,
    center: &NlpIterate,
    pen: &PenaltyState,
) -> Result<(DVector<f64>, f64)> {
    check_point(prob, x, lam, nu)?;
    center.check_dims(prob)?;
    let r = NlpEval::full(prob, x)?.rl_residual(x, lam, nu, center, pen);
    let norm = inf_norm(&r);
    Ok((r, norm))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}
