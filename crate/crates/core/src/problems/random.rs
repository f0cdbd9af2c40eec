//! Seeded random instances for property checks, and a brute-force QP oracle
//! for small bound-constrained LQRs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lqr::BoundLqrConfig;
use crate::error::{Error, Result};
use crate::trajopt::{
    ConstraintJacobians, CostDerivatives, DynamicsJacobians, StageModel, TerminalModel, TrajOptProblem,
};

/// Largest `N·nu` the enumeration oracle accepts (3^8 = 6561 patterns).
pub const ORACLE_MAX_CONTROLS: usize = 8;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-scale..scale))
}

fn uniform_vector(r: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.random_range(-scale..scale))
}

/// `MᵀM + floor·I` for a random `M`.
fn random_spd(r: &mut ChaCha8Rng, n: usize, scale: f64, floor: f64) -> DMatrix<f64> {
    let m = uniform_matrix(r, n, n, scale);
    m.tr_mul(&m) + DMatrix::identity(n, n) * floor
}

/// A random bound-constrained LQR with `nx ≤ 3`, `nu ≤ 2` and
/// `N·nu ≤ 8`. Bounds are tight enough that some usually bind.
pub fn random_bound_lqr(seed: u64) -> BoundLqrConfig {
    let mut r = rng(seed);
    let nx = r.random_range(1..=3);
    let nu = r.random_range(1..=2usize);
    let horizon = r.random_range(1..=ORACLE_MAX_CONTROLS / nu);
    let a = DMatrix::identity(nx, nx) + uniform_matrix(&mut r, nx, nx, 0.4);
    BoundLqrConfig {
        a,
        b: uniform_matrix(&mut r, nx, nu, 1.0),
        c: uniform_vector(&mut r, nx, 0.2),
        q: random_spd(&mut r, nx, 1.0, 0.1),
        r: random_spd(&mut r, nu, 0.5, 0.1),
        qn: random_spd(&mut r, nx, 2.0, 1.0),
        u_bar: r.random_range(0.1..0.8),
        x0: uniform_vector(&mut r, nx, 2.0),
        horizon,
    }
}

/// Exact solution `(xs, us)` of a small bound-constrained LQR.
///
/// States `x_0..x_N` and controls `u_0..u_{N−1}`.
pub type PrimalTrajectory = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Enumerates all `3^(N·nu)` patterns (free, at `+ū`, at `−ū`) of the
/// controls, solves the equality-constrained QP of each, and keeps the
/// cheapest primal-feasible one whose bound multipliers have the right sign.
pub fn bound_lqr_oracle(cfg: &BoundLqrConfig) -> Result<PrimalTrajectory> {
    cfg.validate()?;
    let (nx, nu, n) = (cfg.nx(), cfg.nu(), cfg.horizon);
    let m = n * nu;
    if m > ORACLE_MAX_CONTROLS {
        return Err(Error::InvalidParameter(format!(
            "oracle enumerates at most {ORACLE_MAX_CONTROLS} control entries, got {m}"
        )));
    }
    // z = (x_0..x_N, u_0..u_{N-1})
    let nz = (n + 1) * nx + m;
    let xi = |k: usize| k * nx;
    let ui = |k: usize| (n + 1) * nx + k * nu;
    let mut h = DMatrix::zeros(nz, nz);
    for k in 0..n {
        h.view_mut((xi(k), xi(k)), (nx, nx)).copy_from(&cfg.q);
        h.view_mut((ui(k), ui(k)), (nu, nu)).copy_from(&cfg.r);
    }
    h.view_mut((xi(n), xi(n)), (nx, nx)).copy_from(&cfg.qn);

    let n_dyn = (n + 1) * nx;
    let mut a_dyn = DMatrix::zeros(n_dyn, nz);
    let mut b_dyn = DVector::zeros(n_dyn);
    a_dyn.view_mut((0, 0), (nx, nx)).fill_with_identity();
    b_dyn.rows_mut(0, nx).copy_from(&cfg.x0);
    for k in 0..n {
        let row = (k + 1) * nx;
        a_dyn.view_mut((row, xi(k)), (nx, nx)).copy_from(&cfg.a);
        a_dyn.view_mut((row, ui(k)), (nx, nu)).copy_from(&cfg.b);
        a_dyn.view_mut((row, xi(k + 1)), (nx, nx)).copy_from(&(-DMatrix::identity(nx, nx)));
        b_dyn.rows_mut(row, nx).copy_from(&(-&cfg.c));
    }

    let tol = 1e-9;
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut pattern = vec![0u8; m];
    loop {
        let fixed: Vec<usize> = (0..m).filter(|&j| pattern[j] != 0).collect();
        let ne = n_dyn + fixed.len();
        let mut kkt = DMatrix::zeros(nz + ne, nz + ne);
        let mut rhs = DVector::zeros(nz + ne);
        kkt.view_mut((0, 0), (nz, nz)).copy_from(&h);
        kkt.view_mut((nz, 0), (n_dyn, nz)).copy_from(&a_dyn);
        kkt.view_mut((0, nz), (nz, n_dyn)).copy_from(&a_dyn.transpose());
        rhs.rows_mut(nz, n_dyn).copy_from(&b_dyn);
        for (i, &j) in fixed.iter().enumerate() {
            let col = (n + 1) * nx + j;
            kkt[(nz + n_dyn + i, col)] = 1.0;
            kkt[(col, nz + n_dyn + i)] = 1.0;
            rhs[nz + n_dyn + i] = if pattern[j] == 1 { cfg.u_bar } else { -cfg.u_bar };
        }
        // A singular pattern (e.g. a bound on an input that has no effect)
        // has no unique solution; another pattern covers the minimizer.
        if let Some(sol) = kkt.lu().solve(&rhs) {
            let z = sol.rows(0, nz).into_owned();
            let feasible = (0..m).all(|j| z[(n + 1) * nx + j].abs() <= cfg.u_bar + tol);
            // Hz + Aᵀy = 0 with y the multiplier of `u_j = ±ū`; the
            // inequality multiplier is y (upper) or −y (lower), both ≥ 0.
            let signs_ok = fixed.iter().enumerate().all(|(i, &j)| {
                let y = sol[nz + n_dyn + i];
                let nu_j = if pattern[j] == 1 { y } else { -y };
                nu_j >= -1e-8
            });
            if feasible && signs_ok {
                let obj = 0.5 * z.dot(&(&h * &z));
                if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                    best = Some((obj, z));
                }
            }
        }
        // Next pattern in base 3.
        let mut i = 0;
        while i < m && pattern[i] == 2 {
            pattern[i] = 0;
            i += 1;
        }
        if i == m {
            break;
        }
        pattern[i] += 1;
    }
    let (_, z) = best.ok_or_else(|| Error::Model("no KKT-consistent active pattern".into()))?;
    let xs = (0..=n).map(|k| z.rows(xi(k), nx).into_owned()).collect();
    let us = (0..n).map(|k| z.rows(ui(k), nu).into_owned()).collect();
    Ok((xs, us))
}

/// Data of a small nonlinear control problem:
/// `x' = Ax + Bu + c + ε·sin(x)`, costs `½(x−x_ref)ᵀQ(x−x_ref) + ½uᵀRu`,
/// `|u| ≤ ū`, terminal cost `½xᵀQ_Nx` and terminal half-space `gᵀx ≤ d`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomOcpConfig {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub eps: f64,
    pub q: DMatrix<f64>,
    pub x_ref: DVector<f64>,
    pub r: DMatrix<f64>,
    pub u_bar: f64,
    pub qn: DMatrix<f64>,
    pub g: DVector<f64>,
    pub d: f64,
    pub x0: DVector<f64>,
    pub horizon: usize,
}

/// A random instance with `N ≤ 5` and state/control dimensions `≤ 3`.
pub fn random_ocp(seed: u64) -> RandomOcpConfig {
    let mut r = rng(seed);
    let nx = r.random_range(1..=3);
    let nu = r.random_range(1..=nx);
    let horizon = r.random_range(1..=5);
    let mut b = uniform_matrix(&mut r, nx, nu, 0.5);
    for i in 0..nu {
        b[(i, i)] += 1.0;
    }
    let g = uniform_vector(&mut r, nx, 1.0);
    let mut cfg = RandomOcpConfig {
        a: DMatrix::identity(nx, nx) + uniform_matrix(&mut r, nx, nx, 0.3),
        b,
        c: uniform_vector(&mut r, nx, 0.1),
        eps: r.random_range(0.05..0.3),
        q: random_spd(&mut r, nx, 0.5, 0.1),
        x_ref: uniform_vector(&mut r, nx, 1.0),
        r: random_spd(&mut r, nu, 0.5, 0.1),
        u_bar: r.random_range(0.3..1.5),
        qn: random_spd(&mut r, nx, 1.0, 1.0),
        d: 0.0,
        g,
        x0: uniform_vector(&mut r, nx, 1.0),
        horizon,
    };
    // The zero-control rollout keeps a margin inside the terminal half-space,
    // so every instance is strictly feasible; the half-space usually binds.
    let mut x = cfg.x0.clone();
    for _ in 0..horizon {
        x = &cfg.a * &x + &cfg.c + x.map(f64::sin) * cfg.eps;
    }
    cfg.d = cfg.g.dot(&x) + 0.05 * cfg.g.norm();
    cfg
}

#[derive(Debug, Clone)]
struct OcpStage(Arc<RandomOcpConfig>);

impl StageModel for OcpStage {
    fn nx(&self) -> usize {
        self.0.a.nrows()
    }
    fn nu(&self) -> usize {
        self.0.b.ncols()
    }
    fn nx_next(&self) -> usize {
        self.0.a.nrows()
    }
    fn nh(&self) -> usize {
        2 * self.nu()
    }

    fn cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        let e = x - &self.0.x_ref;
        Ok(0.5 * e.dot(&(&self.0.q * &e)) + 0.5 * u.dot(&(&self.0.r * u)))
    }

    fn cost_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<CostDerivatives> {
        Ok(CostDerivatives {
            lx: &self.0.q * (x - &self.0.x_ref),
            lu: &self.0.r * u,
            lxx: self.0.q.clone(),
            lux: DMatrix::zeros(self.nu(), self.nx()),
            luu: self.0.r.clone(),
        })
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        let p = &self.0;
        Ok(&p.a * x + &p.b * u + &p.c + x.map(f64::sin) * p.eps - y)
    }

    fn dynamics_jacobians(&self, x: &DVector<f64>, _u: &DVector<f64>, _y: &DVector<f64>) -> Result<DynamicsJacobians> {
        let p = &self.0;
        let nx = self.nx();
        Ok(DynamicsJacobians {
            fx: &p.a + DMatrix::from_diagonal(&x.map(|v| p.eps * v.cos())),
            fu: p.b.clone(),
            fy: -DMatrix::identity(nx, nx),
        })
    }

    fn constraints(&self, _x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let nu = self.nu();
        Ok(DVector::from_fn(2 * nu, |i, _| {
            if i < nu {
                u[i] - self.0.u_bar
            } else {
                -u[i - nu] - self.0.u_bar
            }
        }))
    }

    fn constraint_jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Result<ConstraintJacobians> {
        let (nx, nu) = (self.nx(), self.nu());
        let mut hu = DMatrix::zeros(2 * nu, nu);
        for i in 0..nu {
            hu[(i, i)] = 1.0;
            hu[(nu + i, i)] = -1.0;
        }
        Ok(ConstraintJacobians {
            hx: DMatrix::zeros(2 * nu, nx),
            hu,
        })
    }

    fn constraint_curvature(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _y: &DVector<f64>,
        lam: &DVector<f64>,
        _nu: &DVector<f64>,
    ) -> Result<Option<DMatrix<f64>>> {
        let (nx, nu) = (self.nx(), self.nu());
        let mut c = DMatrix::zeros(2 * nx + nu, 2 * nx + nu);
        for i in 0..nx {
            c[(i, i)] = -self.0.eps * lam[i] * x[i].sin();
        }
        Ok(Some(c))
    }
}

#[derive(Debug, Clone)]
struct OcpTerminal(Arc<RandomOcpConfig>);

impl TerminalModel for OcpTerminal {
    fn nx(&self) -> usize {
        self.0.qn.nrows()
    }
    fn nh(&self) -> usize {
        1
    }
    fn cost(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * x.dot(&(&self.0.qn * x)))
    }
    fn cost_derivatives(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        Ok((&self.0.qn * x, self.0.qn.clone()))
    }
    fn constraints(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_element(1, self.0.g.dot(x) - self.0.d))
    }
    fn constraint_jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_row_slice(1, self.nx(), self.0.g.as_slice()))
    }
}

pub fn make_random_ocp(cfg: &RandomOcpConfig) -> Result<TrajOptProblem> {
    let nx = cfg.a.nrows();
    let shapes = [
        ("A", cfg.a.shape(), (nx, nx)),
        ("B", cfg.b.shape(), (nx, cfg.b.ncols())),
        ("Q", cfg.q.shape(), (nx, nx)),
        ("R", cfg.r.shape(), (cfg.b.ncols(), cfg.b.ncols())),
        ("QN", cfg.qn.shape(), (nx, nx)),
    ];
    for (name, got, want) in shapes {
        if got != want {
            return Err(Error::Dimension(format!("{name} is {got:?}, expected {want:?}")));
        }
    }
    for (name, len) in [("c", cfg.c.len()), ("x_ref", cfg.x_ref.len()), ("g", cfg.g.len()), ("x0", cfg.x0.len())] {
        crate::error::check_len(name, len, nx)?;
    }
    if cfg.horizon == 0 || !(cfg.u_bar >= 0.0) {
        return Err(Error::InvalidParameter("horizon and u_bar must be positive".into()));
    }
    let shared = Arc::new(cfg.clone());
    let stage: Arc<dyn StageModel> = Arc::new(OcpStage(shared.clone()));
    TrajOptProblem::new(vec![stage; cfg.horizon], Arc::new(OcpTerminal(shared)), cfg.x0.clone())
}
