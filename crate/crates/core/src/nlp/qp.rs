use nalgebra::{DMatrix, DVector};

use super::NlpProblem;
use crate::error::{Error, Result};

/// `min ½xᵀPx + qᵀx  s.t.  Ax = b,  Gx <= g`.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g_mat: DMatrix<f64>,
    pub g_vec: DVector<f64>,
}

impl QuadraticProgram {
    pub fn new(
        p: DMatrix<f64>,
        q: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        g_mat: DMatrix<f64>,
        g_vec: DVector<f64>,
    ) -> Result<Self> {
        let n = q.len();
        if p.shape() != (n, n)
            || a.ncols() != n
            || a.nrows() != b.len()
            || g_mat.ncols() != n
            || g_mat.nrows() != g_vec.len()
        {
            return Err(Error::Dimension(format!(
                "QP: P {:?}, q {}, A {:?}, b {}, G {:?}, g {}",
                p.shape(),
                n,
                a.shape(),
                b.len(),
                g_mat.shape(),
                g_vec.len()
            )));
        }
        Ok(Self {
            p,
            q,
            a,
            b,
            g_mat,
            g_vec,
        })
    }

    pub fn unconstrained(p: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        let n = q.len();
        Self::new(
            p,
            q,
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
        )
    }
}

impl NlpProblem for QuadraticProgram {
    fn n(&self) -> usize {
        self.q.len()
    }
    fn ne(&self) -> usize {
        self.b.len()
    }
    fn ni(&self) -> usize {
        self.g_vec.len()
    }
    fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * x.dot(&(&self.p * x)) + self.q.dot(x))
    }
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.p * x + &self.q)
    }
    fn equalities(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.a * x - &self.b)
    }
    fn equality_jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.a.clone())
    }
    fn inequalities(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.g_mat * x - &self.g_vec)
    }
    fn inequality_jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.g_mat.clone())
    }
    fn lagrangian_hessian(
        &self,
        _x: &DVector<f64>,
        _lam: &DVector<f64>,
        _nu: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        Ok(self.p.clone())
    }
}
