//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use alprox::cli::{self, RunOutcome, RunSpec};
use alprox::kkt::InertiaCorrector;
use alprox::nlp::{
    self, BclParams, HessianMode, LineSearchParams, NlpIterate, NlpProblem, PenaltyState, QuadraticProgram,
};
use alprox::problems::{
    bound_lqr_oracle, make_bound_lqr, make_car_park, make_random_ocp, obstacle_scenario, random_bound_lqr,
    random_ocp, CarParkConfig, RotationalSetup,
};
use alprox::trajopt::{self, backward_pass, stacked_nlp_view, Trajectory};
use alprox::{Result, SolveStatus};

struct Verdict {
    id: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn check(id: &'static str, f: impl FnOnce() -> (bool, String)) -> Verdict {
    let t0 = Instant::now();
    let (pass, detail) = f();
    Verdict { id, pass, detail, elapsed: t0.elapsed() }
}

fn max_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).amax()).fold(0.0, f64::max)
}

fn run_cli(problem: &str, tol: f64, mu0: f64, rho0: f64) -> (RunOutcome, Duration) {
    let spec = RunSpec { problem: problem.into(), tol: Some(tol), mu0: Some(mu0), rho0: Some(rho0), ..Default::default() };
    let t0 = Instant::now();
    let out = cli::run(&spec).expect("setup error");
    (out, t0.elapsed())
}

fn status(out: &RunOutcome) -> String {
    match (out.status, &out.error) {
        (Some(s), _) => s.to_string(),
        (None, e) => format!("error {e:?}"),
    }
}

fn pen(mu_e: f64, mu_i: f64, rho: f64) -> PenaltyState {
    PenaltyState { mu_e, mu_i, rho, omega: 1.0, eps: 1.0, eta: 0.0 }
}

// ---------------------------------------------------------------- 1, 3, 5

fn criterion_1() -> (bool, String) {
    let (out, time) = run_cli("lqr-rot", 1e-8, 100.0, 1e-6);
    let Some(sol) = out.solution.as_ref() else { return (false, format!("no solution: {:?}", out.error)) };
    let umax = sol.us.iter().map(|u| u.amax()).fold(0.0, f64::max);
    let iters = out.total_inner_iters;
    let pass = out.status == Some(SolveStatus::Converged)
        && iters <= 30
        && (0.4 - 1e-6..=0.4 + 1e-8).contains(&umax)
        && time <= Duration::from_secs(1);
    (pass, format!("status {}, {iters} iterations, max|u| = {umax:.10}, {time:.2?}", status(&out)))
}

fn criterion_3() -> (bool, String) {
    let (out, _) = run_cli("lqr-unstable", 1e-8, 100.0, 1e-6);
    let Some(sol) = out.solution.as_ref() else { return (false, format!("no solution: {:?}", out.error)) };
    let umax = sol.us.iter().map(|u| u.amax()).fold(0.0, f64::max);
    let at_bound = sol.us.iter().filter(|u| u.iter().any(|v| (v.abs() - 0.4).abs() <= 1e-6)).count();
    let frac = at_bound as f64 / sol.us.len() as f64;
    let xn = sol.xs.last().unwrap().amax();
    let pass = out.status == Some(SolveStatus::Converged) && umax <= 0.4 + 1e-8 && frac >= 0.3 && xn > 1e-2;
    (
        pass,
        format!(
            "status {}, {} iterations, {:.0}% of nodes at a bound, |x_N|_inf = {xn:.3}",
            status(&out),
            out.total_inner_iters,
            100.0 * frac
        ),
    )
}

fn criterion_5() -> (bool, String) {
    let (out, _) = run_cli("lqr-obstacle", 1e-8, 100.0, 1e-6);
    let Some(sol) = out.solution.as_ref() else { return (false, format!("no solution: {:?}", out.error)) };
    let (_, obstacles) = obstacle_scenario().unwrap();
    let viol = sol
        .xs
        .iter()
        .flat_map(|x| obstacles.iter().map(move |o| o.eval(x).0.max(0.0)))
        .fold(0.0, f64::max);
    let iters = out.total_inner_iters;
    let pass = out.status == Some(SolveStatus::Converged) && viol <= 1e-6 && iters <= 30;
    (pass, format!("status {}, {iters} iterations, max [h_obs]_+ = {viol:.1e}", status(&out)))
}

// ---------------------------------------------------------------- 2, 6c

fn criterion_2() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let cfg = random_bound_lqr(seed);
        let problem = make_bound_lqr(&cfg).unwrap();
        let init = Trajectory::from_initial_state(&problem).unwrap();
        let (sol, rep) =
            trajopt::solve(&problem, &init, &BclParams::default(), &LineSearchParams::default(), HessianMode::GaussNewton)
                .unwrap();
        if rep.status != SolveStatus::Converged {
            return (false, format!("seed {seed}: {:?}", rep.status));
        }
        let (xs, us) = bound_lqr_oracle(&cfg).unwrap();
        worst = worst.max(max_diff(&sol.xs, &xs)).max(max_diff(&sol.us, &us));
    }
    (worst <= 1e-6, format!("20 instances, max distance to enumeration oracle {worst:.1e}"))
}

fn criterion_6c() -> (bool, String) {
    let (bcl, ls) = (BclParams::default(), LineSearchParams::default());
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let problem = make_random_ocp(&random_ocp(seed)).unwrap();
        let init = Trajectory::from_initial_state(&problem).unwrap();
        let (ddp, rep) = trajopt::solve(&problem, &init, &bcl, &ls, HessianMode::GaussNewton).unwrap();
        let view = stacked_nlp_view(&problem);
        let w0 = view.from_trajectory(&init).unwrap();
        let r = nlp::solve(&view, &w0.x, &w0.lam, &w0.nu, &bcl, &ls, HessianMode::GaussNewton).unwrap();
        if rep.status != SolveStatus::Converged || r.status != SolveStatus::Converged {
            return (false, format!("seed {seed}: ddp {:?}, stacked {:?}", rep.status, r.status));
        }
        let flat = view.to_trajectory(&r.solution).unwrap();
        worst = worst.max(max_diff(&ddp.xs, &flat.xs)).max(max_diff(&ddp.us, &flat.us));
    }
    (worst <= 1e-6, format!("10 instances, max primal difference {worst:.1e}"))
}

// ---------------------------------------------------------------- 4, 6e

fn criterion_4_and_6e() -> (Verdict, Verdict) {
    let problem = make_car_park(&CarParkConfig::default()).unwrap();
    let init = Trajectory::from_initial_state(&problem).unwrap();
    // μ_0 = 100 in the weight convention, i.e. initial penalties 1/100.
    let bcl = BclParams { eps_abs: 2e-4, mu_e0: 1.0 / 100.0, mu_i0: 1.0 / 100.0, rho0: 1e-5, ..Default::default() };
    let t0 = Instant::now();
    let res = trajopt::solve(&problem, &init, &bcl, &LineSearchParams::default(), HessianMode::GaussNewton);
    let elapsed = t0.elapsed();
    let (sol, rep) = match res {
        Ok(r) => r,
        Err(e) => {
            let v = |id| Verdict { id, pass: false, detail: e.to_string(), elapsed };
            return (v("4"), v("6e"));
        }
    };
    let xn = sol.xs.last().unwrap();
    let parked = xn.amax() <= 0.1;
    let c4 = Verdict {
        id: "4",
        pass: rep.status == SolveStatus::Converged
            && rep.total_inner_iters <= 150
            && parked
            && elapsed <= Duration::from_secs(30),
        detail: format!(
            "status {}, {} iterations ({} outer), x_N = [{:.4}, {:.4}, {:.4}, {:.4}]",
            rep.status, rep.total_inner_iters, rep.outer_iters, xn[0], xn[1], xn[2], xn[3]
        ),
        elapsed,
    };
    let c6e = Verdict {
        id: "6e",
        pass: rep.factorizations > 0 && rep.max_kkt_residual <= 1e-9,
        detail: format!(
            "{} factorizations, max |Kw - rhs|/(1+|rhs|) = {:.1e}",
            rep.factorizations, rep.max_kkt_residual
        ),
        elapsed: Duration::ZERO,
    };
    (c4, c6e)
}

// ---------------------------------------------------------------- 6a

/// `f = ½xᵀPx + qᵀx + Σ a_i sin x_i`, `c_i = A_i x − b_i + γ_i sin x_{i mod n}`,
/// `h_j = G_j x − g_j + κ_j cos x_{j mod n}`.
struct RandomNlp {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a_sin: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    gamma: DVector<f64>,
    g_mat: DMatrix<f64>,
    g: DVector<f64>,
    kappa: DVector<f64>,
}

fn rvec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn rmat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

impl RandomNlp {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(1..=10);
        let ne = rng.random_range(0..=n.min(4));
        let ni = rng.random_range(0..=4);
        let m = rmat(rng, n, n);
        Self {
            p: &m * m.transpose() + DMatrix::identity(n, n),
            q: rvec(rng, n),
            a_sin: rvec(rng, n),
            a: rmat(rng, ne, n),
            b: rvec(rng, ne),
            gamma: 0.5 * rvec(rng, ne),
            g_mat: rmat(rng, ni, n),
            g: rvec(rng, ni),
            kappa: 0.5 * rvec(rng, ni),
        }
    }
}

impl NlpProblem for RandomNlp {
    fn n(&self) -> usize {
        self.q.len()
    }
    fn ne(&self) -> usize {
        self.b.len()
    }
    fn ni(&self) -> usize {
        self.g.len()
    }
    fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * x.dot(&(&self.p * x)) + self.q.dot(x) + self.a_sin.dot(&x.map(f64::sin)))
    }
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.p * x + &self.q + self.a_sin.component_mul(&x.map(f64::cos)))
    }
    fn equalities(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = x.len();
        Ok(&self.a * x - &self.b + DVector::from_fn(self.ne(), |i, _| self.gamma[i] * x[i % n].sin()))
    }
    fn equality_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut j = self.a.clone();
        for i in 0..self.ne() {
            j[(i, i % x.len())] += self.gamma[i] * x[i % x.len()].cos();
        }
        Ok(j)
    }
    fn inequalities(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = x.len();
        Ok(&self.g_mat * x - &self.g + DVector::from_fn(self.ni(), |j, _| self.kappa[j] * x[j % n].cos()))
    }
    fn inequality_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut j = self.g_mat.clone();
        for r in 0..self.ni() {
            j[(r, r % x.len())] -= self.kappa[r] * x[r % x.len()].sin();
        }
        Ok(j)
    }
    fn lagrangian_hessian(&self, x: &DVector<f64>, lam: &DVector<f64>, nu: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = x.len();
        let mut h = self.p.clone();
        for i in 0..n {
            h[(i, i)] -= self.a_sin[i] * x[i].sin();
        }
        for i in 0..self.ne() {
            h[(i % n, i % n)] -= lam[i] * self.gamma[i] * x[i % n].sin();
        }
        for j in 0..self.ni() {
            h[(j % n, j % n)] -= nu[j] * self.kappa[j] * x[j % n].cos();
        }
        Ok(h)
    }
}

fn criterion_6a() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut tested, mut worst) = (0, 0.0_f64);
    while tested < 100 {
        let prob = RandomNlp::new(&mut rng);
        let (n, ne, ni) = (prob.n(), prob.ne(), prob.ni());
        let x = rvec(&mut rng, n);
        let lam = rvec(&mut rng, ne);
        let nu = rvec(&mut rng, ni).abs();
        let center = NlpIterate::new(rvec(&mut rng, n), rvec(&mut rng, ne), rvec(&mut rng, ni).abs());
        let p = pen(rng.random_range(0.05..1.0), rng.random_range(0.05..1.0), rng.random_range(0.0..1.0));

        // Only smooth points: no shifted constraint near its kink.
        let h = prob.inequalities(&x).unwrap();
        if (0..ni).any(|j| (h[j] + p.mu_i * center.nu[j]).abs() < 1e-4) {
            continue;
        }
        tested += 1;

        let grad = nlp::merit_gradient(&prob, &x, &lam, &nu, &center, &p).unwrap();
        let merit = |w: &DVector<f64>| {
            let (wx, wl, wn) = (w.rows(0, n).into_owned(), w.rows(n, ne).into_owned(), w.rows(n + ne, ni).into_owned());
            nlp::merit_value(&prob, &wx, &wl, &wn, &center, &p).unwrap()
        };
        let w = DVector::from_iterator(n + ne + ni, x.iter().chain(lam.iter()).chain(nu.iter()).copied());
        let step = 1e-5;
        let fd = DVector::from_fn(w.len(), |i, _| {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += step;
            wm[i] -= step;
            (merit(&wp) - merit(&wm)) / (2.0 * step)
        });
        worst = worst.max((&fd - &grad).amax() / grad.amax().max(1.0));
    }
    (worst <= 1e-6, format!("100 points, max relative error {worst:.1e}"))
}

// ---------------------------------------------------------------- 6b

/// Newton step on the merit restricted to `(x, λ)`: the merit Hessian
/// `[[H + ρI + (2/μ_e)JᵀJ, −Jᵀ], [−J, μ_e I]]` against the merit gradient.
fn merit_newton_step(qp: &QuadraticProgram, x: &DVector<f64>, lam: &DVector<f64>, center: &NlpIterate, p: &PenaltyState) -> DVector<f64> {
    let (n, ne) = (x.len(), lam.len());
    let j = &qp.a;
    let mut k = DMatrix::zeros(n + ne, n + ne);
    k.view_mut((0, 0), (n, n))
        .copy_from(&(&qp.p + DMatrix::identity(n, n) * p.rho + (2.0 / p.mu_e) * j.transpose() * j));
    k.view_mut((0, n), (n, ne)).copy_from(&(-j.transpose()));
    k.view_mut((n, 0), (ne, n)).copy_from(&(-j));
    k.view_mut((n, n), (ne, ne)).copy_from(&(DMatrix::identity(ne, ne) * p.mu_e));
    let g = nlp::merit_gradient(qp, x, lam, &DVector::zeros(0), center, p).unwrap();
    k.lu().solve(&(-g)).unwrap()
}

fn criterion_6b() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=20);
        let ne = rng.random_range(1..=n.min(10));
        let m = rmat(&mut rng, n, n);
        let qp = QuadraticProgram::new(
            &m * m.transpose() + DMatrix::identity(n, n),
            rvec(&mut rng, n),
            rmat(&mut rng, ne, n),
            rvec(&mut rng, ne),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
        )
        .unwrap();
        let x = rvec(&mut rng, n);
        let lam = rvec(&mut rng, ne);
        let center = NlpIterate::new(rvec(&mut rng, n), rvec(&mut rng, ne), DVector::zeros(0));
        let p = pen(rng.random_range(0.1..1.0), 1.0, rng.random_range(0.0..1.0));

        let saddle = nlp::pd_newton_step(&qp, &x, &lam, &DVector::zeros(0), &center, &p, HessianMode::Exact).unwrap();
        let merit = merit_newton_step(&qp, &x, &lam, &center, &p);
        let err = (merit.rows(0, n) - &saddle.dx).amax().max((merit.rows(n, ne) - &saddle.dlam).amax());
        worst = worst.max(err);
    }
    (worst <= 1e-10, format!("50 QPs, max step difference {worst:.1e}"))
}

// ---------------------------------------------------------------- 6d

fn criterion_6d() -> (bool, String) {
    let mut setup = RotationalSetup::rotational();
    setup.u_bar = f64::INFINITY;
    let cfg = setup.to_config().unwrap();
    let problem = make_bound_lqr(&cfg).unwrap();
    let traj = Trajectory::from_initial_state(&problem).unwrap();
    let bw = match backward_pass(&problem, &traj, &traj, &pen(1e-9, 1e-9, 0.0), HessianMode::GaussNewton, &mut InertiaCorrector::default()) {
        Ok(bw) => bw,
        Err(e) => return (false, e.to_string()),
    };
    let mut pm = cfg.qn.clone();
    let mut worst: f64 = 0.0;
    for k in (0..cfg.horizon).rev() {
        let bp = cfg.b.transpose() * &pm;
        let gain = -(&cfg.r + &bp * &cfg.b).lu().solve(&(&bp * &cfg.a)).unwrap();
        pm = &cfg.q + cfg.a.transpose() * &pm * (&cfg.a + &cfg.b * &gain);
        pm = 0.5 * (&pm + pm.transpose());
        worst = worst.max((gain - &bw.gains[k].k_fb).amax());
    }
    (worst <= 1e-6, format!("horizon {}, max gain difference {worst:.1e} at mu_e = 1e-9", cfg.horizon))
}

// ---------------------------------------------------------------- 6f

/// A QP with a known primal-dual solution: some rows active with positive
/// multipliers, the rest strictly inactive.
fn qp_with_solution(rng: &mut ChaCha8Rng) -> (QuadraticProgram, DVector<f64>, DVector<f64>, DVector<f64>) {
    let n = rng.random_range(1..=8);
    let ne = rng.random_range(0..=n.min(3));
    let ni = rng.random_range(0..=5);
    let m = rmat(rng, n, n);
    let p = &m * m.transpose() + DMatrix::identity(n, n);
    let a = rmat(rng, ne, n);
    let g_mat = rmat(rng, ni, n);
    let x = rvec(rng, n);
    let lam = rvec(rng, ne);
    let active: Vec<bool> = (0..ni).map(|_| rng.random_bool(0.5)).collect();
    let nu = DVector::from_fn(ni, |j, _| if active[j] { rng.random_range(0.1..1.0) } else { 0.0 });
    let slack = DVector::from_fn(ni, |j, _| if active[j] { 0.0 } else { rng.random_range(0.1..1.0) });
    let q = -(&p * &x + a.transpose() * &lam + g_mat.transpose() * &nu);
    let b = &a * &x;
    let g = &g_mat * &x + slack;
    (QuadraticProgram::new(p, q, a, b, g_mat, g).unwrap(), x, lam, nu)
}

fn criterion_6f() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failures = Vec::new();

    // Projection and active-set identities on random points.
    for trial in 0..500 {
        let (qp, ..) = qp_with_solution(&mut rng);
        let (n, ne, ni) = (qp.n(), qp.ne(), qp.ni());
        let x = 2.0 * rvec(&mut rng, n);
        let lam_l = rvec(&mut rng, ne);
        let nu_l = rvec(&mut rng, ni).abs();
        let (mu_e, mu_i) = (rng.random_range(0.01..1.0), rng.random_range(0.01..1.0));
        let (_, nu_hat) = nlp::shifted_multipliers(&qp, &x, &lam_l, &nu_l, mu_e, mu_i).unwrap();
        let z_hat = nlp::shifted_slack(&qp, &x, &nu_l, mu_i).unwrap();
        let h = qp.inequalities(&x).unwrap();
        let active = nlp::active_set(&qp, &x, &nu_l, mu_i).unwrap();
        for j in 0..ni {
            let shifted = h[j] + mu_i * nu_l[j];
            let ok = nu_hat[j] >= 0.0
                && z_hat[j] <= 0.0
                && (mu_i * nu_hat[j] + z_hat[j] - shifted).abs() <= 1e-12 * (1.0 + shifted.abs())
                && (active.contains(j) || (nu_hat[j] == 0.0 && z_hat[j] == shifted));
            if !ok {
                failures.push(format!("projection identity, trial {trial} row {j}"));
            }
        }
    }

    // Fixed point: at a KKT point used as its own center, r_l vanishes and
    // the multiplier update leaves (λ, ν) unchanged.
    for trial in 0..200 {
        let (qp, x, lam, nu) = qp_with_solution(&mut rng);
        let (dual, primal) = nlp::kkt_residuals(&qp, &x, &lam, &nu).unwrap();
        let center = NlpIterate::new(x.clone(), lam.clone(), nu.clone());
        let p = pen(rng.random_range(0.01..1.0), rng.random_range(0.01..1.0), rng.random_range(0.0..1.0));
        let (_, rl) = nlp::rl_residual(&qp, &x, &lam, &nu, &center, &p).unwrap();
        let (lam1, nu1) = nlp::multiplier_update(&qp, &x, &lam, &nu, &lam, &nu, p.mu_e, p.mu_i).unwrap();
        let drift = (&lam1 - &lam).amax().max(if nu.is_empty() { 0.0 } else { (&nu1 - &nu).amax() });
        if dual.max(primal) > 1e-12 || rl > 1e-12 || drift > 1e-12 {
            failures.push(format!("fixed point, trial {trial}: kkt {:.1e}, r_l {rl:.1e}, drift {drift:.1e}", dual.max(primal)));
        }
    }

    // Penalties never increase and stay above their floors.
    let bcl = BclParams::default();
    let problem = make_bound_lqr(&RotationalSetup::rotational().to_config().unwrap()).unwrap();
    let init = Trajectory::from_initial_state(&problem).unwrap();
    let (_, rep) = trajopt::solve(&problem, &init, &bcl, &LineSearchParams::default(), HessianMode::GaussNewton).unwrap();
    let monotone = rep.trace.windows(2).all(|w| w[1].mu_e <= w[0].mu_e && w[1].mu_i <= w[0].mu_i)
        && rep.trace.iter().all(|r| r.mu_e >= bcl.mu_e_floor && r.mu_i >= bcl.mu_i_floor);
    if !monotone {
        failures.push("penalty schedule not monotone".into());
    }

    let detail = match failures.first() {
        None => "500 projection / active-set checks, 200 fixed points, penalty schedule".to_string(),
        Some(f) => format!("{} failures, first: {f}", failures.len()),
    };
    (failures.is_empty(), detail)
}

fn main() {
    let mut verdicts = vec![
        check("1", criterion_1),
        check("2", criterion_2),
        check("3", criterion_3),
    ];
    let (c4, c6e) = criterion_4_and_6e();
    verdicts.push(c4);
    verdicts.push(check("5", criterion_5));
    verdicts.push(check("6a", criterion_6a));
    verdicts.push(check("6b", criterion_6b));
    verdicts.push(check("6c", criterion_6c));
    verdicts.push(check("6d", criterion_6d));
    verdicts.push(c6e);
    verdicts.push(check("6f", criterion_6f));

    for v in &verdicts {
        println!(
            "{} criterion {:<3} {} [{:.2?}]",
            if v.pass { "PASS" } else { "FAIL" },
            v.id,
            v.detail,
            v.elapsed
        );
    }
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
