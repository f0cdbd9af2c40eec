//! Small hand-written problems for unit tests.

use nalgebra::{DMatrix, DVector};

use super::{NlpProblem, QuadraticProgram};
use crate::error::Result;

type Scalar = fn(f64) -> f64;

/// One-dimensional problem with at most one equality and one inequality,
/// each given as (value, derivative).
pub struct ScalarFns {
    f: (Scalar, Scalar),
    c: Option<(Scalar, Scalar)>,
    h: Option<(Scalar, Scalar)>,
}

impl ScalarFns {
    pub fn new(f: Scalar, df: Scalar) -> Self {
        Self { f: (f, df), c: None, h: None }
    }
    pub fn eq(mut self, c: Scalar, dc: Scalar) -> Self {
        self.c = Some((c, dc));
        self
    }
    pub fn ineq(mut self, h: Scalar, dh: Scalar) -> Self {
        self.h = Some((h, dh));
        self
    }
}

fn opt_vec(o: &Option<(Scalar, Scalar)>, x: f64, deriv: bool) -> DVector<f64> {
    match o {
        Some((v, d)) => DVector::from_element(1, if deriv { d(x) } else { v(x) }),
        None => DVector::zeros(0),
    }
}

impl NlpProblem for ScalarFns {
    fn n(&self) -> usize {
        1
    }
    fn ne(&self) -> usize {
        self.c.is_some() as usize
    }
    fn ni(&self) -> usize {
        self.h.is_some() as usize
    }
    fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        Ok((self.f.0)(x[0]))
    }
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_element(1, (self.f.1)(x[0])))
    }
    fn equalities(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(opt_vec(&self.c, x[0], false))
    }
    fn equality_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = opt_vec(&self.c, x[0], true);
        Ok(DMatrix::from_column_slice(d.len(), 1, d.as_slice()))
    }
    fn inequalities(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(opt_vec(&self.h, x[0], false))
    }
    fn inequality_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = opt_vec(&self.h, x[0], true);
        Ok(DMatrix::from_column_slice(d.len(), 1, d.as_slice()))
    }
    fn lagrangian_hessian(
        &self,
        x: &DVector<f64>,
        _lam: &DVector<f64>,
        _nu: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        // Central difference of the objective derivative; constraint
        // curvature is not modelled.
        let e = 1e-6;
        let d = ((self.f.1)(x[0] + e) - (self.f.1)(x[0] - e)) / (2.0 * e);
        Ok(DMatrix::from_element(1, 1, d))
    }
}

/// `½xᵀPx + qᵀx` with a fixed SPD `P`; minimizer `−P⁻¹q`.
pub fn unconstrained_qp(n: usize) -> QuadraticProgram {
    let p = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 + i as f64 } else { 0.3 });
    let q = DVector::from_fn(n, |i, _| 1.0 - i as f64);
    QuadraticProgram::unconstrained(p, q).unwrap()
}

pub fn qp_minimizer(qp: &QuadraticProgram) -> DVector<f64> {
    -(qp.p.clone().try_inverse().unwrap() * &qp.q)
}

/// `½‖x‖²` with `h(x) = values` constant.
pub fn constant_h(values: &[f64]) -> QuadraticProgram {
    let n = 2;
    QuadraticProgram::new(
        DMatrix::identity(n, n),
        DVector::zeros(n),
        DMatrix::zeros(0, n),
        DVector::zeros(0),
        DMatrix::zeros(values.len(), n),
        -DVector::from_column_slice(values),
    )
    .unwrap()
}

/// `½‖x‖²  s.t.  1 − x₁ <= 0`; solution `x* = (1, 0)`, `ν* = 1`.
pub fn halfplane() -> QuadraticProgram {
    QuadraticProgram::new(
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        DMatrix::zeros(0, 2),
        DVector::zeros(0),
        DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]),
        DVector::from_element(1, -1.0),
    )
    .unwrap()
}
