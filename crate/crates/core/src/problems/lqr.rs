//! Bound-constrained LQR, optionally with polyhedral obstacles on the state.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::trajopt::{
    ConstraintJacobians, CostDerivatives, DynamicsJacobians, StageModel, TerminalModel, TrajOptProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// Exact zero-order hold through the matrix exponential.
    #[default]
    ZeroOrderHold,
    /// `A = I + dt·A_c`.
    Euler,
}

/// Discretizes `ẋ = A_c x + u + c` (input matrix `I`) with step `dt`.
/// Returns `(A, B, c)`.
pub fn discretize_rotational(
    ac: &DMatrix<f64>,
    c: &DVector<f64>,
    dt: f64,
    scheme: Discretization,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let n = ac.nrows();
    if ac.ncols() != n {
        return Err(Error::Dimension(format!("A_c must be square, got {:?}", ac.shape())));
    }
    check_len("c", c.len(), n)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    match scheme {
        Discretization::Euler => Ok((
            DMatrix::identity(n, n) + ac * dt,
            DMatrix::identity(n, n) * dt,
            c * dt,
        )),
        Discretization::ZeroOrderHold => {
            // exp([[A_c, I, c], [0, 0, 0]]·dt) = [[A, B, c_d], [0, I, 0]].
            let m = 2 * n + 1;
            let mut big = DMatrix::zeros(m, m);
            big.view_mut((0, 0), (n, n)).copy_from(&(ac * dt));
            big.view_mut((0, n), (n, n)).fill_with_identity();
            big.view_mut((0, n), (n, n)).scale_mut(dt);
            big.view_mut((0, 2 * n), (n, 1)).copy_from(&(c * dt));
            let e = big.exp();
            Ok((
                e.view((0, 0), (n, n)).into_owned(),
                e.view((0, n), (n, n)).into_owned(),
                e.view((0, 2 * n), (n, 1)).column(0).into_owned(),
            ))
        }
    }
}

/// Interior `{x | Cx <= d}` to be avoided: `h(x) = −max_i (Cx − d)_i <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralObstacle {
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl PolyhedralObstacle {
    pub fn new(c: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        if c.nrows() == 0 || c.nrows() != d.len() {
            return Err(Error::Dimension(format!(
                "obstacle needs at least one row and matching offsets (C {:?}, d {})",
                c.shape(),
                d.len()
            )));
        }
        Ok(Self { c, d })
    }

    /// Axis-aligned box `lo <= x <= hi`.
    pub fn axis_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        check_len("box corner", hi.len(), lo.len())?;
        let n = lo.len();
        let mut c = DMatrix::zeros(2 * n, n);
        let mut d = DVector::zeros(2 * n);
        for i in 0..n {
            c[(i, i)] = 1.0;
            d[i] = hi[i];
            c[(n + i, i)] = -1.0;
            d[n + i] = -lo[i];
        }
        Self::new(c, d)
    }

    pub fn dim(&self) -> usize {
        self.c.ncols()
    }

    /// Constraint value and the row attaining the max (lowest index on ties).
    pub fn eval(&self, x: &DVector<f64>) -> (f64, usize) {
        let r = &self.c * x - &self.d;
        let mut best = 0;
        for i in 1..r.len() {
            if r[i] > r[best] {
                best = i;
            }
        }
        (-r[best], best)
    }

    /// Semi-smooth gradient `−C_{i*}` from the argmax row.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (_, i) = self.eval(x);
        -self.c.row(i).transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundLqrConfig {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub qn: DMatrix<f64>,
    /// Componentwise bound `|u| <= u_bar`; `f64::INFINITY` drops the rows.
    pub u_bar: f64,
    pub x0: DVector<f64>,
    pub horizon: usize,
}

fn is_psd(m: &DMatrix<f64>) -> bool {
    let sym = (m - m.transpose()).amax() <= 1e-12 * (1.0 + m.amax());
    sym && m.clone().symmetric_eigen().eigenvalues.iter().all(|&v| v >= -1e-12 * (1.0 + m.amax()))
}

impl BoundLqrConfig {
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, nu) = (self.nx(), self.nu());
        let shapes = [
            ("A", self.a.shape(), (nx, nx)),
            ("B", self.b.shape(), (nx, nu)),
            ("Q", self.q.shape(), (nx, nx)),
            ("R", self.r.shape(), (nu, nu)),
            ("QN", self.qn.shape(), (nx, nx)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::Dimension(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        check_len("c", self.c.len(), nx)?;
        check_len("x0", self.x0.len(), nx)?;
        for (name, m) in [("Q", &self.q), ("R", &self.r), ("QN", &self.qn)] {
            if !is_psd(m) {
                return Err(Error::InvalidParameter(format!("{name} must be symmetric positive semi-definite")));
            }
        }
        if !(self.u_bar >= 0.0) {
            return Err(Error::InvalidParameter(format!("u_bar must be nonnegative, got {}", self.u_bar)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        Ok(())
    }

    fn has_bounds(&self) -> bool {
        self.u_bar.is_finite()
    }
}

/// `½xᵀQx + ½uᵀRu`, `f = Ax + Bu + c − x'`, `h = (u − ū; −u − ū; h_obs(x))`.
#[derive(Debug, Clone)]
pub struct LqrStage {
    cfg: BoundLqrConfig,
    obstacles: Vec<PolyhedralObstacle>,
}

impl LqrStage {
    fn n_bounds(&self) -> usize {
        if self.cfg.has_bounds() {
            2 * self.cfg.nu()
        } else {
            0
        }
    }
}

impl StageModel for LqrStage {
    fn nx(&self) -> usize {
        self.cfg.nx()
    }
    fn nu(&self) -> usize {
        self.cfg.nu()
    }
    fn nx_next(&self) -> usize {
        self.cfg.nx()
    }
    fn nh(&self) -> usize {
        self.n_bounds() + self.obstacles.len()
    }

    fn cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * x.dot(&(&self.cfg.q * x)) + 0.5 * u.dot(&(&self.cfg.r * u)))
    }

    fn cost_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<CostDerivatives> {
        Ok(CostDerivatives {
            lx: &self.cfg.q * x,
            lu: &self.cfg.r * u,
            lxx: self.cfg.q.clone(),
            lux: DMatrix::zeros(self.nu(), self.nx()),
            luu: self.cfg.r.clone(),
        })
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.cfg.a * x + &self.cfg.b * u + &self.cfg.c - y)
    }

    fn dynamics_jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>, _y: &DVector<f64>) -> Result<DynamicsJacobians> {
        let nx = self.nx();
        Ok(DynamicsJacobians {
            fx: self.cfg.a.clone(),
            fu: self.cfg.b.clone(),
            fy: -DMatrix::identity(nx, nx),
        })
    }

    fn constraints(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let nu = self.nu();
        let mut h = DVector::zeros(self.nh());
        if self.cfg.has_bounds() {
            for i in 0..nu {
                h[i] = u[i] - self.cfg.u_bar;
                h[nu + i] = -u[i] - self.cfg.u_bar;
            }
        }
        let nb = self.n_bounds();
        for (j, ob) in self.obstacles.iter().enumerate() {
            h[nb + j] = ob.eval(x).0;
        }
        Ok(h)
    }

    fn constraint_jacobians(&self, x: &DVector<f64>, _u: &DVector<f64>) -> Result<ConstraintJacobians> {
        let (nx, nu, nh) = (self.nx(), self.nu(), self.nh());
        let mut hx = DMatrix::zeros(nh, nx);
        let mut hu = DMatrix::zeros(nh, nu);
        if self.cfg.has_bounds() {
            for i in 0..nu {
                hu[(i, i)] = 1.0;
                hu[(nu + i, i)] = -1.0;
            }
        }
        let nb = self.n_bounds();
        for (j, ob) in self.obstacles.iter().enumerate() {
            hx.row_mut(nb + j).copy_from(&ob.gradient(x).transpose());
        }
        Ok(ConstraintJacobians { hx, hu })
    }
}

#[derive(Debug, Clone)]
pub struct LqrTerminal {
    qn: DMatrix<f64>,
    obstacles: Vec<PolyhedralObstacle>,
}

impl TerminalModel for LqrTerminal {
    fn nx(&self) -> usize {
        self.qn.nrows()
    }
    fn nh(&self) -> usize {
        self.obstacles.len()
    }
    fn cost(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * x.dot(&(&self.qn * x)))
    }
    fn cost_derivatives(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        Ok((&self.qn * x, self.qn.clone()))
    }
    fn constraints(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_iterator(self.obstacles.len(), self.obstacles.iter().map(|o| o.eval(x).0)))
    }
    fn constraint_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(self.obstacles.len(), self.nx());
        for (i, o) in self.obstacles.iter().enumerate() {
            j.row_mut(i).copy_from(&o.gradient(x).transpose());
        }
        Ok(j)
    }
}

pub fn make_bound_lqr(cfg: &BoundLqrConfig) -> Result<TrajOptProblem> {
    make_obstacle_lqr(cfg, &[])
}

/// Bound-constrained LQR whose states must also stay outside every obstacle,
/// at every node including the terminal one.
pub fn make_obstacle_lqr(cfg: &BoundLqrConfig, obstacles: &[PolyhedralObstacle]) -> Result<TrajOptProblem> {
    cfg.validate()?;
    for o in obstacles {
        check_len("obstacle dimension", o.dim(), cfg.nx())?;
    }
    let stage: Arc<dyn StageModel> = Arc::new(LqrStage {
        cfg: cfg.clone(),
        obstacles: obstacles.to_vec(),
    });
    let terminal = Arc::new(LqrTerminal {
        qn: cfg.qn.clone(),
        obstacles: obstacles.to_vec(),
    });
    TrajOptProblem::new(vec![stage; cfg.horizon], terminal, cfg.x0.clone())
}

/// Continuous-time setup of the rotational benchmarks, discretized on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationalSetup {
    pub ac: DMatrix<f64>,
    pub c: DVector<f64>,
    pub u_bar: f64,
    pub dt: f64,
    pub horizon: usize,
    pub scheme: Discretization,
    pub x0: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub qn: DMatrix<f64>,
}

impl RotationalSetup {
    fn base(ac: [f64; 4]) -> Self {
        Self {
            ac: DMatrix::from_row_slice(2, 2, &ac),
            c: DVector::from_vec(vec![0.3, -0.2]),
            u_bar: 0.4,
            dt: 0.05,
            horizon: 60,
            scheme: Discretization::ZeroOrderHold,
            x0: DVector::from_vec(vec![1.0, 0.5]),
            q: DMatrix::identity(2, 2) * 1e-2,
            r: DMatrix::identity(2, 2) * 5e-2,
            qn: DMatrix::identity(2, 2) * 100.0,
        }
    }

    /// Pure rotation `A_c = [[0, 2], [−2, 0]]`; the bounds saturate but the
    /// origin is reached.
    pub fn rotational() -> Self {
        Self::base([0.0, 2.0, -2.0, 0.0])
    }

    /// Repulsive spiral `A_c = [[0.4, 2], [−2, 0.4]]`; the bounded control is
    /// bang-bang and the origin is out of reach.
    pub fn unstable() -> Self {
        Self::base([0.4, 2.0, -2.0, 0.4])
    }

    pub fn to_config(&self) -> Result<BoundLqrConfig> {
        let (a, b, c) = discretize_rotational(&self.ac, &self.c, self.dt, self.scheme)?;
        Ok(BoundLqrConfig {
            a,
            b,
            c,
            q: self.q.clone(),
            r: self.r.clone(),
            qn: self.qn.clone(),
            u_bar: self.u_bar,
            x0: self.x0.clone(),
            horizon: self.horizon,
        })
    }
}

/// The rotational system with a box obstacle across the unconstrained path.
pub fn obstacle_scenario() -> Result<(BoundLqrConfig, Vec<PolyhedralObstacle>)> {
    let cfg = RotationalSetup::rotational().to_config()?;
    let obstacle = PolyhedralObstacle::axis_box(&[-0.45, 0.0], &[-0.3, 0.2])?;
    Ok((cfg, vec![obstacle]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_generator_gives_identity() {
        let ac = DMatrix::zeros(2, 2);
        let c = DVector::zeros(2);
        for s in [Discretization::Euler, Discretization::ZeroOrderHold] {
            let (a, _, _) = discretize_rotational(&ac, &c, 0.05, s).unwrap();
            assert!((a - DMatrix::identity(2, 2)).amax() < 1e-15);
        }
    }

    #[test]
    fn euler_rotation() {
        let ac = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]);
        let (a, b, c) = discretize_rotational(&ac, &DVector::from_vec(vec![0.3, -0.2]), 0.05, Discretization::Euler).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.1, 1.0]);
        assert!((a - expected).amax() < 1e-15);
        assert!((b - DMatrix::identity(2, 2) * 0.05).amax() < 1e-15);
        assert!((c[0] - 0.015).abs() < 1e-15);
    }

    #[test]
    fn zoh_rotation_is_orthogonal() {
        let ac = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]);
        let (a, _, _) = discretize_rotational(&ac, &DVector::zeros(2), 0.05, Discretization::ZeroOrderHold).unwrap();
        // exp of a skew generator: [[cos θ, sin θ], [−sin θ, cos θ]] with θ = 0.1.
        let (s, c) = 0.1_f64.sin_cos();
        let oracle = DMatrix::from_row_slice(2, 2, &[c, s, -s, c]);
        assert!((&a - oracle).amax() < 1e-14);
        let sv = a.singular_values();
        assert!((sv[0] - 1.0).abs() < 1e-14 && (sv[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zoh_input_and_drift_integrals() {
        // Scalar ẋ = a x + u + c: B = (e^{a dt} − 1)/a.
        let a = 0.7;
        let dt = 0.2;
        let (ad, bd, cd) = discretize_rotational(
            &DMatrix::from_element(1, 1, a),
            &DVector::from_element(1, 0.5),
            dt,
            Discretization::ZeroOrderHold,
        )
        .unwrap();
        let b = ((a * dt).exp() - 1.0) / a;
        assert!((ad[(0, 0)] - (a * dt).exp()).abs() < 1e-14);
        assert!((bd[(0, 0)] - b).abs() < 1e-14);
        assert!((cd[0] - 0.5 * b).abs() < 1e-14);
    }

    #[test]
    fn obstacle_values() {
        let unit = PolyhedralObstacle::axis_box(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(unit.eval(&DVector::zeros(2)).0, 1.0);
        assert!(unit.eval(&DVector::from_vec(vec![5.0, 0.0])).0 < 0.0);
        // Tie at the center: all rows equal, lowest index wins.
        assert_eq!(unit.eval(&DVector::zeros(2)).1, 0);
        assert_eq!(unit.gradient(&DVector::zeros(2)), DVector::from_vec(vec![-1.0, 0.0]));
    }

    #[test]
    fn infinite_bound_has_no_rows() {
        let mut cfg = RotationalSetup::rotational().to_config().unwrap();
        cfg.u_bar = f64::INFINITY;
        let p = make_bound_lqr(&cfg).unwrap();
        assert_eq!(p.stages[0].nh(), 0);
        assert_eq!(p.terminal.nh(), 0);
    }

    #[test]
    fn rejects_indefinite_weights() {
        let mut cfg = RotationalSetup::rotational().to_config().unwrap();
        cfg.q[(0, 0)] = -1.0;
        assert!(matches!(make_bound_lqr(&cfg), Err(Error::InvalidParameter(_))));
    }
}
