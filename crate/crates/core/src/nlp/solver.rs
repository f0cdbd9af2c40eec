//! Inner Newton/Armijo loop and the BCL outer loop.

use nalgebra::DVector;

use super::merit::NlpEval;
use super::newton::{newton_from_eval, NewtonStep};
use super::{
    BclParams, HessianMode, LineSearchParams, NlpIterate, NlpProblem, PenaltyState, SolveReport,
};
use crate::error::{Error, Result};
use crate::kkt::InertiaCorrector;
use crate::linalg::{inf_norm, pos_part};
use crate::report::{SolveStatus, TraceRecord};

/// Largest primal shift tried when a Newton direction is not a descent
/// direction of the merit.
const MAX_DESCENT_SHIFT: f64 = 1e6;

/// Merit decreases below this relative size are rounding noise.
pub(crate) const STALL_RTOL: f64 = 1e-14;
/// Consecutive noise-level steps after which the inner loop gives up
/// improving the subproblem.
pub(crate) const STALL_STEPS: usize = 3;
/// Consecutive outer iterations without a single accepted inner step before
/// the solve reports a line-search failure.
pub(crate) const MAX_STUCK_OUTER: usize = 2;

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub iterate: NlpIterate,
    pub iters: usize,
    /// `‖r_l‖_∞` at the returned point.
    pub rl_norm: f64,
    /// `Converged` when `‖r_l‖_∞ <= ω` (or the global criterion) was met.
    pub status: SolveStatus,
    pub trace: Vec<TraceRecord>,
}

/// Multiplier update of the accepted BCL branch:
/// `(2λ̂ − λ̃, [2ν̂ − ν̃]_+)` with `λ̂, ν̂` evaluated at `x_new`.
#[allow(clippy::too_many_arguments)]
pub fn multiplier_update<P: NlpProblem + ?Sized>(
    prob: &P,
    x_new: &DVector<f64>,
    lam_tilde: &DVector<f64>,
    nu_tilde: &DVector<f64>,
    lam_l: &DVector<f64>,
    nu_l: &DVector<f64>,
    mu_e: f64,
    mu_i: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (lam_hat, nu_hat) = super::shifted_multipliers(prob, x_new, lam_l, nu_l, mu_e, mu_i)?;
    Ok(update_from_hats(&lam_hat, &nu_hat, lam_tilde, nu_tilde))
}

pub(crate) fn update_from_hats(
    lam_hat: &DVector<f64>,
    nu_hat: &DVector<f64>,
    lam_tilde: &DVector<f64>,
    nu_tilde: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    (
        2.0 * lam_hat - lam_tilde,
        pos_part(&(2.0 * nu_hat - nu_tilde)),
    )
}

/// BCL branch on the new primal infeasibility. Returns the next penalty
/// state and whether the multiplier estimates should be updated.
pub fn bcl_update(pen: &PenaltyState, bcl: &BclParams, eta_next: f64) -> (PenaltyState, bool) {
    let mut next = *pen;
    next.eta = eta_next;
    if eta_next < pen.eps {
        next.eps = pen.eps * pen.mu_i.powf(bcl.beta_bcl);
        next.omega = pen.omega * pen.mu_i;
        (next, true)
    } else {
        next.mu_e = (bcl.mu_f * pen.mu_e).max(bcl.mu_e_floor);
        next.mu_i = (bcl.mu_f * pen.mu_i).max(bcl.mu_i_floor);
        next.eps = bcl.eps0 * next.mu_i.powf(bcl.alpha_bcl);
        next.omega = bcl.omega0 * next.mu_i;
        (next, false)
    }
}

/// `max_j |ν_j h_j| / (1 + |ν_j|)`.
pub fn complementarity_measure(h: &DVector<f64>, nu: &DVector<f64>) -> f64 {
    h.iter()
        .zip(nu.iter())
        .fold(0.0_f64, |m, (hj, nj)| m.max((hj * nj).abs() / (1.0 + nj.abs())))
}

/// Stopping test: stationarity, feasibility and complementarity all within `tol`.
fn kkt_satisfied(ev: &NlpEval, lam: &DVector<f64>, nu: &DVector<f64>, tol: f64) -> (bool, f64, f64) {
    let dual = inf_norm(&ev.lagrangian_gradient(lam, nu));
    let primal = ev.primal_infeasibility();
    let ok = dual <= tol && primal <= tol && complementarity_measure(&ev.h, nu) <= tol;
    (ok, dual, primal)
}

pub(crate) struct InnerCtx<'a> {
    pub ls: &'a LineSearchParams,
    pub mode: HessianMode,
    pub max_iters: usize,
    /// Global tolerance; the loop also stops once the point satisfies the
    /// outer stopping test.
    pub eps_abs: Option<f64>,
    pub outer_iter: usize,
    pub inner_offset: usize,
}

/// Backtracking search along `step`; evaluation failures at trial points
/// count as +∞. Returns the accepted point, its merit and `α`.
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn armijo<P: NlpProblem + ?Sized>(
    prob: &P,
    x: &DVector<f64>,
    lam: &DVector<f64>,
    nu: &DVector<f64>,
    step: &NewtonStep,
    center: &NlpIterate,
    pen: &PenaltyState,
    ls: &LineSearchParams,
    phi0: f64,
    slope: f64,
    ev: &NlpEval,
) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, f64, f64)> {
    // Linearized activity s_j(α) = ν_l,j + (h_j + α ∇h_jᵀdx)/μ_i.
    let dh = ev.jh() * &step.dx;
    let breakpoints = (0..ev.h.len())
        .filter_map(|j| {
            let s = center.nu[j] + ev.h[j] / pen.mu_i;
            (s < 0.0 && dh[j] > 0.0).then(|| -s * pen.mu_i / dh[j])
        })
        .collect();
    for alpha in ls.trial_steps(breakpoints) {
        let xt = x + &step.dx * alpha;
        let lt = lam + &step.dlam * alpha;
        let nt = nu + &step.dnu * alpha;
        if let Ok(evt) = NlpEval::values(prob, &xt) {
            let phi = evt.merit(&xt, &lt, &nt, center, pen);
            if ls.sufficient_decrease(phi0, slope, alpha, phi) {
                return Some((xt, lt, nt, phi, alpha));
            }
        }
    }
    None
}

fn inner_loop<P: NlpProblem + ?Sized>(
    prob: &P,
    center: &NlpIterate,
    start: &NlpIterate,
    pen: &PenaltyState,
    ctx: &InnerCtx,
    corrector: &mut InertiaCorrector,
) -> Result<InnerResult> {
    let ls = ctx.ls;
    let mut x = start.x.clone();
    let mut lam = start.lam.clone();
    let mut nu = start.nu.clone();
    let mut trace = Vec::new();
    let mut ev = NlpEval::full(prob, &x)?;
    let mut iters = 0;
    let mut stalled = 0;
    // ω shrinks geometrically on accepted outer steps; solving subproblems
    // beyond the global tolerance buys nothing.
    let omega = pen.omega.max(ctx.eps_abs.unwrap_or(0.0));

    loop {
        let rl_norm = inf_norm(&ev.rl_residual(&x, &lam, &nu, center, pen));
        let done = |status| InnerResult {
            iterate: NlpIterate::new(x.clone(), lam.clone(), nu.clone()),
            iters,
            rl_norm,
            status,
            trace: trace.clone(),
        };
        if rl_norm <= omega || stalled >= STALL_STEPS {
            return Ok(done(SolveStatus::Converged));
        }
        if let Some(tol) = ctx.eps_abs {
            if kkt_satisfied(&ev, &lam, &pos_part(&nu), tol).0 {
                return Ok(done(SolveStatus::Converged));
            }
        }
        if iters >= ctx.max_iters {
            return Ok(done(SolveStatus::MaxIters));
        }

        let phi0 = ev.merit(&x, &lam, &nu, center, pen);
        let grad = ev.merit_gradient(&x, &lam, &nu, center, pen);

        // Newton direction; shift the primal block until it descends and the
        // Armijo search succeeds.
        let mut extra = 0.0;
        let (step, xn, ln, nn, phi, alpha) = loop {
            let step = match newton_from_eval(prob, &ev, &x, &lam, &nu, center, pen, ctx.mode, corrector, extra) {
                Ok(s) => s,
                Err(Error::Regularization(_)) | Err(Error::Singular(_)) => {
                    return Ok(done(SolveStatus::LineSearchFailure));
                }
                Err(e) => return Err(e),
            };
            let slope = grad.dot(&step.stacked());
            if slope < 0.0 {
                if let Some((xt, lt, nt, phi, alpha)) = armijo(prob, &x, &lam, &nu, &step, center, pen, ls, phi0, slope, &ev) {
                    break (step, xt, lt, nt, phi, alpha);
                }
                log::debug!("armijo search failed (phi0 {phi0:e}, slope {slope:e})");
            } else {
                let w_scale = 1.0 + inf_norm(&x).max(inf_norm(&lam)).max(inf_norm(&nu));
                if inf_norm(&step.stacked()) <= 1e-14 * w_scale {
                    // Stationary up to roundoff.
                    return Ok(done(SolveStatus::Converged));
                }
            }
            extra = if extra == 0.0 { 1e-8 } else { extra * 10.0 };
            if extra > MAX_DESCENT_SHIFT {
                log::debug!("no acceptable step found (slope {slope:e})");
                return Ok(done(SolveStatus::LineSearchFailure));
            }
        };

        stalled = if phi0 - phi <= STALL_RTOL * (1.0 + phi0.abs()) { stalled + 1 } else { 0 };
        x = xn;
        lam = ln;
        nu = nn;
        ev = NlpEval::full(prob, &x)?;
        iters += 1;
        trace.push(TraceRecord {
            outer_iter: ctx.outer_iter,
            inner_iter: ctx.inner_offset + iters,
            merit: phi,
            primal_inf: ev.primal_infeasibility(),
            dual_inf: inf_norm(&ev.lagrangian_gradient(&lam, &nu)),
            mu_e: pen.mu_e,
            mu_i: pen.mu_i,
            rho: pen.rho,
            alpha,
            active_set_size: step.active.len(),
            regularization: step.record.delta + extra,
        });
    }
}

/// Approximately minimizes the merit of the subproblem anchored at `center`,
/// starting from the center itself, until `‖r_l‖_∞ <= ω`.
pub fn inner_solve<P: NlpProblem + ?Sized>(
    prob: &P,
    center: &NlpIterate,
    pen: &PenaltyState,
    ls: &LineSearchParams,
    mode: HessianMode,
    max_iters: usize,
) -> Result<InnerResult> {
    center.check_dims(prob)?;
    pen.validate()?;
    ls.validate()?;
    let ctx = InnerCtx {
        ls,
        mode,
        max_iters,
        eps_abs: None,
        outer_iter: 0,
        inner_offset: 0,
    };
    inner_loop(prob, center, center, pen, &ctx, &mut InertiaCorrector::default())
}

/// Proximal primal-dual augmented Lagrangian method with BCL globalization.
pub fn solve<P: NlpProblem + ?Sized>(
    prob: &P,
    x0: &DVector<f64>,
    lam0: &DVector<f64>,
    nu0: &DVector<f64>,
    bcl: &BclParams,
    ls: &LineSearchParams,
    mode: HessianMode,
) -> Result<SolveReport> {
    bcl.validate()?;
    ls.validate()?;
    let mut center = NlpIterate::new(x0.clone(), lam0.clone(), nu0.clone());
    center.check_dims(prob)?;
    if nu0.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter("initial inequality multipliers must be nonnegative".into()));
    }

    let ev0 = NlpEval::full(prob, x0)?;
    let mut pen = PenaltyState::initial(bcl, ev0.primal_infeasibility());
    let mut corrector = InertiaCorrector::default();
    let mut trace = Vec::new();
    let mut total_inner = 0;

    let report = |status, outer, total_inner, it: NlpIterate, ev: &NlpEval, pen, trace| SolveReport {
        status,
        outer_iters: outer,
        total_inner_iters: total_inner,
        dual_inf: inf_norm(&ev.lagrangian_gradient(&it.lam, &it.nu)),
        primal_inf: ev.primal_infeasibility(),
        solution: it,
        penalties: pen,
        trace,
    };

    if kkt_satisfied(&ev0, &center.lam, &center.nu, bcl.eps_abs).0 {
        return Ok(report(SolveStatus::Converged, 0, 0, center, &ev0, pen, trace));
    }

    let mut current = center.clone();
    // After a rejected outer step the center's multipliers stay frozen, but
    // the inner solve resumes from the last iterate rather than the center.
    let mut start = center.clone();
    let mut stuck = 0;
    for outer in 0..bcl.max_outer_iters {
        let ctx = InnerCtx {
            ls,
            mode,
            max_iters: bcl.max_inner_iters,
            eps_abs: Some(bcl.eps_abs),
            outer_iter: outer + 1,
            inner_offset: total_inner,
        };
        let inner = inner_loop(prob, &center, &start, &pen, &ctx, &mut corrector)?;
        total_inner += inner.iters;
        trace.extend(inner.trace);
        let x = inner.iterate.x;
        let lam_t = inner.iterate.lam;
        let nu_t = inner.iterate.nu;
        let ev = NlpEval::full(prob, &x)?;
        current = NlpIterate::new(x.clone(), lam_t.clone(), pos_part(&nu_t));

        log::debug!(
            "outer {}: inner {} ({:?}), |r_l| {:.3e}, omega {:.3e}, eta {:.3e}, eps {:.3e}, mu_e {:.1e}, mu_i {:.1e}",
            outer + 1,
            inner.iters,
            inner.status,
            inner.rl_norm,
            pen.omega,
            ev.primal_infeasibility(),
            pen.eps,
            pen.mu_e,
            pen.mu_i
        );

        // A failed search ends the subproblem; the BCL update may still
        // make progress. Give up once two subproblems in a row are stuck.
        if inner.status == SolveStatus::LineSearchFailure && inner.iters == 0 {
            stuck += 1;
            if stuck >= MAX_STUCK_OUTER {
                return Ok(report(SolveStatus::LineSearchFailure, outer + 1, total_inner, current, &ev, pen, trace));
            }
        } else {
            stuck = 0;
        }
        if kkt_satisfied(&ev, &current.lam, &current.nu, bcl.eps_abs).0 {
            return Ok(report(SolveStatus::Converged, outer + 1, total_inner, current, &ev, pen, trace));
        }

        let eta = ev.primal_infeasibility();
        let (next, accepted) = bcl_update(&pen, bcl, eta);
        if accepted {
            let lam_hat = ev.lam_hat(&center.lam, pen.mu_e);
            let nu_hat = ev.nu_hat(&center.nu, pen.mu_i);
            let (lam_l, nu_l) = update_from_hats(&lam_hat, &nu_hat, &lam_t, &nu_t);
            center = NlpIterate::new(x, lam_l, nu_l);
            start = center.clone();
        } else {
            center.x = x.clone();
            start = NlpIterate::new(x, lam_t, nu_t);
        }
        pen = next;
    }

    let ev = NlpEval::full(prob, &current.x)?;
    Ok(report(SolveStatus::MaxIters, bcl.max_outer_iters, total_inner, current, &ev, pen, trace))
}
