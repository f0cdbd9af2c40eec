//! BCL outer loop around backward pass / rollout / Armijo inner iterations.

use nalgebra::DVector;

use super::backward::backward_from_eval;
use super::eval::TrajEval;
use super::forward::{armijo, rollout_direction};
use super::{TrajOptProblem, TrajSolveReport, Trajectory};
use crate::error::{Error, Result};
use crate::kkt::InertiaCorrector;
use crate::linalg::pos_part;
use crate::nlp::solver::{MAX_STUCK_OUTER, STALL_RTOL, STALL_STEPS};
use crate::nlp::{bcl_update, BclParams, HessianMode, LineSearchParams, PenaltyState};
use crate::report::{SolveStatus, TraceRecord};

/// ρ is multiplied by this when the direction does not descend or the
/// line search fails.
const RHO_GROWTH: f64 = 10.0;
const RHO_MAX: f64 = 1e4;
/// ρ is pulled back toward ρ₀ by this factor after consecutive full steps.
const RHO_DECAY: f64 = 0.5;

struct Stats {
    regularizations: usize,
    rho_escalations: usize,
    factorizations: usize,
    max_kkt_residual: f64,
    trace: Vec<TraceRecord>,
    total_inner: usize,
}

fn kkt_satisfied(ev: &TrajEval, traj: &Trajectory, tol: f64) -> bool {
    ev.dual_infeasibility(traj) <= tol && ev.primal_infeasibility() <= tol && ev.complementarity(traj) <= tol
}

fn clip_nus(traj: &Trajectory) -> Trajectory {
    let mut t = traj.clone();
    for nu in t.nus.iter_mut() {
        *nu = pos_part(nu);
    }
    t
}

/// Inner loop on the subproblem anchored at `anchor`. Returns the final
/// iterate and its status; `pen.rho` may be raised or relaxed on the way.
#[allow(clippy::too_many_arguments)]
fn inner_loop(
    problem: &TrajOptProblem,
    anchor: &Trajectory,
    start: &Trajectory,
    pen: &mut PenaltyState,
    bcl: &BclParams,
    ls: &LineSearchParams,
    mode: HessianMode,
    outer_iter: usize,
    corrector: &mut InertiaCorrector,
    stats: &mut Stats,
) -> Result<(Trajectory, SolveStatus)> {
    let mut traj = start.clone();
    let mut ev = TrajEval::new(problem, &traj, true)?;
    let mut iters = 0;
    let mut full_steps = 0;
    let mut stalled = 0;

    loop {
        let rl = ev.rl_residual(&traj, anchor, pen).inf_norm();
        let omega = pen.omega.max(bcl.eps_abs);
        if rl <= omega || stalled >= STALL_STEPS || kkt_satisfied(&ev, &clip_nus(&traj), bcl.eps_abs) {
            return Ok((traj, SolveStatus::Converged));
        }
        if iters >= bcl.max_inner_iters {
            return Ok((traj, SolveStatus::MaxIters));
        }

        // Raise ρ until the rollout descends and the Armijo search succeeds.
        let (out, phi0, bw_delta) = loop {
            let bw = match backward_from_eval(problem, &ev, &traj, anchor, pen, mode, corrector) {
                Ok(bw) => Some(bw),
                Err(Error::Regularization(_)) | Err(Error::Singular(_)) => None,
                Err(e) => return Err(e),
            };
            let phi0 = ev.merit(&traj, anchor, pen);
            if let Some(bw) = bw {
                stats.factorizations += bw.factorizations;
                stats.regularizations += bw.regularizations;
                stats.max_kkt_residual = stats.max_kkt_residual.max(bw.max_residual);
                let dir = rollout_direction(&traj, &bw);
                let slope = ev.merit_gradient(&traj, anchor, pen).dot(&dir);
                if slope < 0.0 {
                    match armijo(problem, &traj, &dir, anchor, pen, ls, &ev, phi0, slope) {
                        Ok(out) => break (out, phi0, bw.max_delta),
                        Err(Error::LineSearch(_)) => {
                            log::debug!("armijo search failed (phi0 {phi0:e}, slope {slope:e}), raising rho");
                        }
                        Err(e) => return Err(e),
                    }
                } else if dir.inf_norm() <= 1e-14 * (1.0 + traj.inf_norm()) {
                    return Ok((traj, SolveStatus::Converged));
                } else {
                    log::debug!("non-descent direction (slope {slope:e}), raising rho");
                }
            }
            if pen.rho >= RHO_MAX {
                log::debug!("rho reached its cap without an acceptable step");
                return Ok((traj, SolveStatus::LineSearchFailure));
            }
            pen.rho = (pen.rho * RHO_GROWTH).clamp(1e-8, RHO_MAX);
            stats.rho_escalations += 1;
            full_steps = 0;
        };

        stalled = if phi0 - out.merit <= STALL_RTOL * (1.0 + phi0.abs()) { stalled + 1 } else { 0 };
        traj = out.traj;
        ev = TrajEval::new(problem, &traj, true)?;
        iters += 1;
        stats.total_inner += 1;
        let active: usize = ev.active_sets(anchor, pen.mu_i).iter().map(Vec::len).sum();
        stats.trace.push(TraceRecord {
            outer_iter,
            inner_iter: stats.total_inner,
            merit: out.merit,
            primal_inf: ev.primal_infeasibility(),
            dual_inf: ev.dual_infeasibility(&traj),
            mu_e: pen.mu_e,
            mu_i: pen.mu_i,
            rho: pen.rho,
            alpha: out.alpha,
            active_set_size: active,
            regularization: bw_delta,
        });

        if out.alpha == 1.0 {
            full_steps += 1;
            if full_steps >= 2 && pen.rho > bcl.rho0 {
                pen.rho = (pen.rho * RHO_DECAY).max(bcl.rho0);
            }
        } else {
            full_steps = 0;
        }
    }
}

/// Solves the control problem from `initial` (whose multipliers serve as
/// the first estimates). Dynamically infeasible initial guesses are fine.
pub fn solve(
    problem: &TrajOptProblem,
    initial: &Trajectory,
    bcl: &BclParams,
    ls: &LineSearchParams,
    mode: HessianMode,
) -> Result<(Trajectory, TrajSolveReport)> {
    bcl.validate()?;
    ls.validate()?;
    problem.validate()?;
    initial.check_dims(problem)?;
    if initial.nus.iter().any(|nu| nu.iter().any(|&v| v < 0.0)) {
        return Err(Error::InvalidParameter("initial path multipliers must be nonnegative".into()));
    }

    let ev0 = TrajEval::new(problem, initial, true)?;
    let mut pen = PenaltyState::initial(bcl, ev0.primal_infeasibility());
    let mut corrector = InertiaCorrector::default();
    let mut stats = Stats {
        regularizations: 0,
        rho_escalations: 0,
        factorizations: 0,
        max_kkt_residual: 0.0,
        trace: Vec::new(),
        total_inner: 0,
    };

    let finish = |status, outer, traj: Trajectory, ev: &TrajEval, pen, stats: Stats| {
        let report = TrajSolveReport {
            status,
            outer_iters: outer,
            total_inner_iters: stats.total_inner,
            dual_inf: ev.dual_infeasibility(&traj),
            primal_inf: ev.primal_infeasibility(),
            penalties: pen,
            trace: stats.trace,
            regularizations: stats.regularizations,
            rho_escalations: stats.rho_escalations,
            factorizations: stats.factorizations,
            max_kkt_residual: stats.max_kkt_residual,
        };
        (traj, report)
    };

    if kkt_satisfied(&ev0, initial, bcl.eps_abs) {
        return Ok(finish(SolveStatus::Converged, 0, initial.clone(), &ev0, pen, stats));
    }

    let mut anchor = initial.clone();
    let mut current = initial.clone();
    // Rejected outer steps keep the anchor multipliers but resume the inner
    // iterations from the last iterate.
    let mut start = initial.clone();
    let mut stuck = 0;
    for outer in 0..bcl.max_outer_iters {
        let inner_before = stats.total_inner;
        let (tilde, status) =
            inner_loop(problem, &anchor, &start, &mut pen, bcl, ls, mode, outer + 1, &mut corrector, &mut stats)?;
        let ev = TrajEval::new(problem, &tilde, true)?;
        current = clip_nus(&tilde);
        log::debug!(
            "outer {}: {:?}, eta {:.3e}, eps {:.3e}, omega {:.3e}, mu_e {:.1e}, mu_i {:.1e}, rho {:.1e}",
            outer + 1,
            status,
            ev.primal_infeasibility(),
            pen.eps,
            pen.omega,
            pen.mu_e,
            pen.mu_i,
            pen.rho
        );
        // A failed search ends the subproblem; the BCL update may still
        // make progress. Give up once two subproblems in a row are stuck.
        if status == SolveStatus::LineSearchFailure && stats.total_inner == inner_before {
            stuck += 1;
            if stuck >= MAX_STUCK_OUTER {
                return Ok(finish(status, outer + 1, current, &ev, pen, stats));
            }
        } else {
            stuck = 0;
        }
        if kkt_satisfied(&ev, &current, bcl.eps_abs) {
            return Ok(finish(SolveStatus::Converged, outer + 1, current, &ev, pen, stats));
        }

        let eta = ev.primal_infeasibility();
        let (next, accepted) = bcl_update(&pen, bcl, eta);
        if accepted {
            let lam_hat = ev.lam_hat(&anchor, pen.mu_e);
            let nu_hat = ev.nu_hat(&anchor, pen.mu_i);
            anchor.lams = lam_hat
                .iter()
                .zip(&tilde.lams)
                .map(|(h, l)| 2.0 * h - l)
                .collect();
            anchor.nus = nu_hat
                .iter()
                .zip(&tilde.nus)
                .map(|(h, n)| pos_part(&(2.0 * h - n)))
                .collect::<Vec<DVector<f64>>>();
        }
        anchor.xs = tilde.xs.clone();
        anchor.us = tilde.us.clone();
        start = if accepted { anchor.clone() } else { tilde };
        pen = next;
    }

    let ev = TrajEval::new(problem, &current, true)?;
    Ok(finish(SolveStatus::MaxIters, bcl.max_outer_iters, current, &ev, pen, stats))
}
