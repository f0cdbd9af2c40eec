//! Kinematic car parking. State `(x, y, θ, v)`, control `(w, a)` with `w`
//! the front wheel angle and `a` the acceleration.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::trajopt::{
    ConstraintJacobians, CostDerivatives, DynamicsJacobians, StageModel, TerminalModel, TrajOptProblem,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CarParkConfig {
    pub d_axle: f64,
    pub dt: f64,
    /// Horizon length in seconds.
    pub t_final: f64,
    pub a_max: f64,
    pub w_max: f64,
    pub x0: DVector<f64>,
    /// Diagonal running state weight.
    pub state_weight: DVector<f64>,
    /// Diagonal control weight `(w, a)`.
    pub control_weight: DVector<f64>,
    /// Diagonal terminal weight.
    pub terminal_weight: DVector<f64>,
}

impl Default for CarParkConfig {
    /// Quadratic costs toward the origin. Weights were calibrated once and
    /// frozen: the solved car parks within 0.1 of the origin in every
    /// coordinate. A light running state weight and a steering weight well
    /// above the acceleration weight keep the steering from chattering
    /// between its bounds, which otherwise slows the solver considerably.
    fn default() -> Self {
        Self {
            d_axle: 2.0,
            dt: 0.03,
            t_final: 15.0,
            a_max: 10.0,
            w_max: 0.5,
            x0: DVector::from_vec(vec![1.0, 1.0, 1.5 * PI, 0.0]),
            state_weight: DVector::from_vec(vec![1e-3, 1e-3, 1e-3, 1e-4]),
            control_weight: DVector::from_vec(vec![1e-1, 1e-3]),
            terminal_weight: DVector::from_vec(vec![100.0, 100.0, 100.0, 30.0]),
        }
    }
}

impl CarParkConfig {
    /// Number of steps `T / dt`.
    pub fn horizon(&self) -> Result<usize> {
        let n = self.t_final / self.dt;
        let r = n.round();
        if !(r >= 1.0) || (n - r).abs() > 1e-6 * r.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "T/dt must be a positive integer (T = {}, dt = {})",
                self.t_final, self.dt
            )));
        }
        Ok(r as usize)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("d_axle", self.d_axle), ("dt", self.dt), ("a_max", self.a_max), ("w_max", self.w_max)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        self.horizon()?;
        let dims = [
            ("x0", self.x0.len(), 4),
            ("state_weight", self.state_weight.len(), 4),
            ("control_weight", self.control_weight.len(), 2),
            ("terminal_weight", self.terminal_weight.len(), 4),
        ];
        for (name, got, want) in dims {
            crate::error::check_len(name, got, want)?;
        }
        let weights = self.state_weight.iter().chain(self.control_weight.iter()).chain(self.terminal_weight.iter());
        if weights.clone().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidParameter("car weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Geometry of one car step.
struct Step {
    b: f64,
    beta: f64,
    db_dr: f64,
    db_dw: f64,
    dbeta_dr: f64,
    dbeta_dw: f64,
}

fn step_geometry(v: f64, w: f64, d: f64, dt: f64) -> Result<Step> {
    let r = v * dt;
    let (s, cw) = w.sin_cos();
    let arg = s * r / d;
    let disc = d * d - r * r * s * s;
    if !(arg.abs() < 1.0) || !(disc > 0.0) {
        return Err(Error::Model(format!("car step undefined for v = {v}, w = {w}")));
    }
    let root = disc.sqrt();
    let inv = 1.0 / (1.0 - arg * arg).sqrt();
    Ok(Step {
        b: r * cw + d - root,
        beta: arg.asin(),
        db_dr: cw + r * s * s / root,
        db_dw: -r * s + r * r * s * cw / root,
        dbeta_dr: s / d * inv,
        dbeta_dw: cw * r / d * inv,
    })
}

/// Next state of the kinematic car.
pub fn car_step(x: &DVector<f64>, u: &DVector<f64>, d_axle: f64, dt: f64) -> Result<DVector<f64>> {
    let g = step_geometry(x[3], u[0], d_axle, dt)?;
    let (st, ct) = x[2].sin_cos();
    Ok(DVector::from_vec(vec![
        x[0] + g.b * ct,
        x[1] + g.b * st,
        x[2] + g.beta,
        x[3] + u[1] * dt,
    ]))
}

/// `(∂x'/∂x, ∂x'/∂u)` of [`car_step`].
pub fn car_step_jacobians(
    x: &DVector<f64>,
    u: &DVector<f64>,
    d_axle: f64,
    dt: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let g = step_geometry(x[3], u[0], d_axle, dt)?;
    let (st, ct) = x[2].sin_cos();
    #[rustfmt::skip]
    let fx = DMatrix::from_row_slice(4, 4, &[
        1.0, 0.0, -g.b * st, g.db_dr * dt * ct,
        0.0, 1.0, g.b * ct, g.db_dr * dt * st,
        0.0, 0.0, 1.0, g.dbeta_dr * dt,
        0.0, 0.0, 0.0, 1.0,
    ]);
    #[rustfmt::skip]
    let fu = DMatrix::from_row_slice(4, 2, &[
        g.db_dw * ct, 0.0,
        g.db_dw * st, 0.0,
        g.dbeta_dw, 0.0,
        0.0, dt,
    ]);
    Ok((fx, fu))
}

#[derive(Debug, Clone)]
pub struct CarStage {
    cfg: CarParkConfig,
}

impl StageModel for CarStage {
    fn nx(&self) -> usize {
        4
    }
    fn nu(&self) -> usize {
        2
    }
    fn nx_next(&self) -> usize {
        4
    }
    fn nh(&self) -> usize {
        4
    }

    fn cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        let q = &self.cfg.state_weight;
        let r = &self.cfg.control_weight;
        Ok(0.5 * x.component_mul(x).dot(q) + 0.5 * u.component_mul(u).dot(r))
    }

    fn cost_derivatives(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<CostDerivatives> {
        let q = &self.cfg.state_weight;
        let r = &self.cfg.control_weight;
        Ok(CostDerivatives {
            lx: x.component_mul(q),
            lu: u.component_mul(r),
            lxx: DMatrix::from_diagonal(q),
            lux: DMatrix::zeros(2, 4),
            luu: DMatrix::from_diagonal(r),
        })
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(car_step(x, u, self.cfg.d_axle, self.cfg.dt)? - y)
    }

    fn dynamics_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>, _y: &DVector<f64>) -> Result<DynamicsJacobians> {
        let (fx, fu) = car_step_jacobians(x, u, self.cfg.d_axle, self.cfg.dt)?;
        Ok(DynamicsJacobians {
            fx,
            fu,
            fy: -DMatrix::identity(4, 4),
        })
    }

    /// `(w − w_max, −w − w_max, a − a_max, −a − a_max)`.
    fn constraints(&self, _x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let (w, a) = (u[0], u[1]);
        Ok(DVector::from_vec(vec![
            w - self.cfg.w_max,
            -w - self.cfg.w_max,
            a - self.cfg.a_max,
            -a - self.cfg.a_max,
        ]))
    }

    fn constraint_jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Result<ConstraintJacobians> {
        let hu = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        Ok(ConstraintJacobians {
            hx: DMatrix::zeros(4, 4),
            hu,
        })
    }

    /// Central differences of the analytic step Jacobians contracted with
    /// `λ`; the bounds are affine.
    fn constraint_curvature(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        _y: &DVector<f64>,
        lam: &DVector<f64>,
        _nu: &DVector<f64>,
    ) -> Result<Option<DMatrix<f64>>> {
        let eps = 1e-6;
        let grad = |x: &DVector<f64>, u: &DVector<f64>| -> Result<DVector<f64>> {
            let (fx, fu) = car_step_jacobians(x, u, self.cfg.d_axle, self.cfg.dt)?;
            let mut g = DVector::zeros(6);
            g.rows_mut(0, 4).copy_from(&fx.tr_mul(lam));
            g.rows_mut(4, 2).copy_from(&fu.tr_mul(lam));
            Ok(g)
        };
        let mut h = DMatrix::zeros(10, 10);
        for i in 0..6 {
            let (mut xp, mut up) = (x.clone(), u.clone());
            let (mut xm, mut um) = (x.clone(), u.clone());
            if i < 4 {
                xp[i] += eps;
                xm[i] -= eps;
            } else {
                up[i - 4] += eps;
                um[i - 4] -= eps;
            }
            let col = (grad(&xp, &up)? - grad(&xm, &um)?) / (2.0 * eps);
            h.view_mut((0, i), (6, 1)).copy_from(&col);
        }
        let sym = 0.5 * (&h + h.transpose());
        Ok(Some(sym))
    }
}

#[derive(Debug, Clone)]
pub struct CarTerminal {
    weight: DVector<f64>,
}

impl TerminalModel for CarTerminal {
    fn nx(&self) -> usize {
        4
    }
    fn nh(&self) -> usize {
        0
    }
    fn cost(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * x.component_mul(x).dot(&self.weight))
    }
    fn cost_derivatives(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        Ok((x.component_mul(&self.weight), DMatrix::from_diagonal(&self.weight)))
    }
    fn constraints(&self, _x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::zeros(0))
    }
    fn constraint_jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(0, 4))
    }
}

pub fn make_car_park(cfg: &CarParkConfig) -> Result<TrajOptProblem> {
    cfg.validate()?;
    let n = cfg.horizon()?;
    let stage: Arc<dyn StageModel> = Arc::new(CarStage { cfg: cfg.clone() });
    let terminal = Arc::new(CarTerminal {
        weight: cfg.terminal_weight.clone(),
    });
    TrajOptProblem::new(vec![stage; n], terminal, cfg.x0.clone())
}
