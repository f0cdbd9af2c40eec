//! Linear rollout of the backward-pass policies and the Armijo search.

use super::backward::BackwardPass;
use super::eval::TrajEval;
use super::{TrajOptProblem, Trajectory};
use crate::error::{Error, Result};
use crate::nlp::{LineSearchParams, PenaltyState};

/// Primal-dual search direction generated by the affine policies.
pub fn rollout_direction(traj: &Trajectory, bw: &BackwardPass) -> Trajectory {
    let n = traj.horizon();
    let mut dir = traj.clone();
    dir.xs[0] = bw.dx0.clone();
    dir.lams[0] = bw.dlam0.clone();
    for k in 0..n {
        let g = &bw.gains[k];
        let dx = dir.xs[k].clone();
        dir.us[k] = &g.k_ff + &g.k_fb * &dx;
        dir.xs[k + 1] = &g.a_ff + &g.a_fb * &dx;
        dir.lams[k + 1] = &g.xi_ff + &g.xi_fb * &dx;
        let dnu_a = &g.zeta_ff + &g.z_fb * &dx;
        dir.nus[k] = -&traj.nus[k];
        for (i, &j) in g.active.iter().enumerate() {
            dir.nus[k][j] = dnu_a[i];
        }
    }
    let t = &bw.terminal;
    let dnu_a = &t.zeta_ff + &t.z_fb * &dir.xs[n];
    dir.nus[n] = -&traj.nus[n];
    for (i, &j) in t.active.iter().enumerate() {
        dir.nus[n][j] = dnu_a[i];
    }
    dir
}

/// `traj + alpha · direction`.
pub fn forward_linear_rollout(
    problem: &TrajOptProblem,
    traj: &Trajectory,
    bw: &BackwardPass,
    alpha: f64,
) -> Result<Trajectory> {
    traj.check_dims(problem)?;
    if bw.gains.len() != problem.horizon() {
        return Err(Error::Dimension(format!(
            "{} stage gains for horizon {}",
            bw.gains.len(),
            problem.horizon()
        )));
    }
    Ok(traj.axpy(alpha, &rollout_direction(traj, bw)))
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub traj: Trajectory,
    pub alpha: f64,
    pub merit: f64,
}

/// Backtracks over [`LineSearchParams::trial_steps`] until the merit
/// satisfies the Armijo test. Model errors at a trial point count as an
/// infinite merit. `ev` must hold derivatives at `traj`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn armijo(
    problem: &TrajOptProblem,
    traj: &Trajectory,
    dir: &Trajectory,
    anchor: &Trajectory,
    pen: &PenaltyState,
    ls: &LineSearchParams,
    ev: &TrajEval,
    phi0: f64,
    slope: f64,
) -> Result<LineSearchOutcome> {
    for alpha in ls.trial_steps(ev.activity_breakpoints(dir, anchor, pen.mu_i)) {
        let cand = traj.axpy(alpha, dir);
        if let Ok(ev) = TrajEval::new(problem, &cand, false) {
            let phi = ev.merit(&cand, anchor, pen);
            log::trace!("alpha {alpha:e}: phi - phi0 = {:e}", phi - phi0);
            if ls.sufficient_decrease(phi0, slope, alpha, phi) {
                return Ok(LineSearchOutcome {
                    traj: cand,
                    alpha,
                    merit: phi,
                });
            }
        }
    }
    Err(Error::LineSearch(ls.alpha_min))
}

/// Rolls out the policies of `bw` and runs the Armijo search on the
/// trajectory merit. Fails with [`Error::InvalidParameter`] if the direction
/// does not descend and with [`Error::LineSearch`] once `α < alpha_min`.
pub fn linesearch_and_accept(
    problem: &TrajOptProblem,
    traj: &Trajectory,
    anchor: &Trajectory,
    bw: &BackwardPass,
    pen: &PenaltyState,
    ls: &LineSearchParams,
) -> Result<LineSearchOutcome> {
    traj.check_dims(problem)?;
    anchor.check_dims(problem)?;
    ls.validate()?;
    let ev = TrajEval::new(problem, traj, true)?;
    let dir = rollout_direction(traj, bw);
    let phi0 = ev.merit(traj, anchor, pen);
    let slope = ev.merit_gradient(traj, anchor, pen).dot(&dir);
    if !(slope < 0.0) {
        return Err(Error::InvalidParameter(format!("not a descent direction (slope {slope:e})")));
    }
    armijo(problem, traj, &dir, anchor, pen, ls, &ev, phi0, slope)
}
