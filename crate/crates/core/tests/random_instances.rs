use alprox::nlp::{self, BclParams, HessianMode, LineSearchParams};
use alprox::problems::{bound_lqr_oracle, make_bound_lqr, make_random_ocp, random_bound_lqr, random_ocp};
use alprox::trajopt::{self, stacked_nlp_view, Trajectory};
use alprox::SolveStatus;

fn max_diff(a: &[nalgebra::DVector<f64>], b: &[nalgebra::DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).amax()).fold(0.0, f64::max)
}

#[test]
fn bound_lqr_matches_enumeration_oracle() {
    let bcl = BclParams::default();
    let ls = LineSearchParams::default();
    for seed in 0..20 {
        let cfg = random_bound_lqr(seed);
        let problem = make_bound_lqr(&cfg).unwrap();
        let init = Trajectory::from_initial_state(&problem).unwrap();
        let (sol, report) = trajopt::solve(&problem, &init, &bcl, &ls, HessianMode::GaussNewton).unwrap();
        assert_eq!(report.status, SolveStatus::Converged, "seed {seed}");
        let (xs, us) = bound_lqr_oracle(&cfg).unwrap();
        let err = max_diff(&sol.xs, &xs).max(max_diff(&sol.us, &us));
        assert!(err <= 1e-6, "seed {seed}: distance to oracle {err:e}");
    }
}

#[test]
fn ddp_agrees_with_stacked_nlp_on_nonlinear_problems() {
    let bcl = BclParams::default();
    let ls = LineSearchParams::default();
    for seed in 0..10 {
        let problem = make_random_ocp(&random_ocp(seed)).unwrap();
        let init = Trajectory::from_initial_state(&problem).unwrap();
        let (ddp, rep) = trajopt::solve(&problem, &init, &bcl, &ls, HessianMode::GaussNewton).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged, "seed {seed} (ddp)");

        let view = stacked_nlp_view(&problem);
        let w0 = view.from_trajectory(&init).unwrap();
        let r = nlp::solve(&view, &w0.x, &w0.lam, &w0.nu, &bcl, &ls, HessianMode::GaussNewton).unwrap();
        assert_eq!(r.status, SolveStatus::Converged, "seed {seed} (nlp)");
        let flat = view.to_trajectory(&r.solution).unwrap();
        let err = max_diff(&ddp.xs, &flat.xs).max(max_diff(&ddp.us, &flat.us));
        assert!(err <= 1e-6, "seed {seed}: solvers differ by {err:e}");
    }
}
