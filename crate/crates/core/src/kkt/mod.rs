//! Regularized saddle-point systems
//!
//! ```text
//! [ H      Jeqᵀ    Jaᵀ  ] [dx ]   [r_x]
//! [ Jeq   -μe I    0    ] [dλ ] = [r_λ]
//! [ Ja     0     -μi I  ] [dνA]   [r_ν]
//! ```
//!
//! The dual block is negative definite, so the system is quasi-definite
//! whenever the primal block is positive definite on the relevant subspace.
//! Inertia correction shifts only the primal block.

mod ldlt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::inf_norm_mat;

pub use ldlt::{Inertia, Ldlt};

/// Zero-pivot threshold, relative to the largest diagonal magnitude.
pub const ZERO_PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SaddleSystem {
    /// Primal block, including any proximal term.
    pub h: DMatrix<f64>,
    pub jeq: DMatrix<f64>,
    pub jineq_active: DMatrix<f64>,
    pub mu_e: f64,
    pub mu_i: f64,
    /// One column per right-hand side.
    pub rhs: DMatrix<f64>,
}

impl SaddleSystem {
    pub fn n_primal(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_dual(&self) -> usize {
        self.jeq.nrows() + self.jineq_active.nrows()
    }

    pub fn dim(&self) -> usize {
        self.n_primal() + self.n_dual()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_primal();
        if self.h.ncols() != n
            || self.jeq.ncols() != n
            || self.jineq_active.ncols() != n
            || self.rhs.nrows() != self.dim()
        {
            return Err(Error::Dimension(format!(
                "saddle system: H {}x{}, Jeq {}x{}, Ja {}x{}, rhs {} rows",
                self.h.nrows(),
                self.h.ncols(),
                self.jeq.nrows(),
                self.jeq.ncols(),
                self.jineq_active.nrows(),
                self.jineq_active.ncols(),
                self.rhs.nrows()
            )));
        }
        if !(self.mu_e > 0.0 && self.mu_i > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dual regularization must be positive (mu_e={}, mu_i={})",
                self.mu_e, self.mu_i
            )));
        }
        Ok(())
    }

    /// Full symmetric matrix with `delta` added to the primal diagonal.
    pub fn assemble(&self, delta: f64) -> DMatrix<f64> {
        let n = self.n_primal();
        let ne = self.jeq.nrows();
        let na = self.jineq_active.nrows();
        let dim = n + ne + na;
        let mut k = DMatrix::zeros(dim, dim);
        k.view_mut((0, 0), (n, n)).copy_from(&self.h);
        for i in 0..n {
            k[(i, i)] += delta;
        }
        k.view_mut((n, 0), (ne, n)).copy_from(&self.jeq);
        k.view_mut((0, n), (n, ne)).copy_from(&self.jeq.transpose());
        k.view_mut((n + ne, 0), (na, n))
            .copy_from(&self.jineq_active);
        k.view_mut((0, n + ne), (n, na))
            .copy_from(&self.jineq_active.transpose());
        for i in 0..ne {
            k[(n + i, n + i)] = -self.mu_e;
        }
        for i in 0..na {
            k[(n + ne + i, n + ne + i)] = -self.mu_i;
        }
        k
    }

    /// The inertia a correctly regularized system must have.
    pub fn target_inertia(&self) -> Inertia {
        Inertia {
            n_pos: self.n_primal(),
            n_neg: self.n_dual(),
            n_zero: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaRecord {
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_zero: usize,
    /// Primal regularization that was added.
    pub delta: f64,
}

impl InertiaRecord {
    fn new(inertia: Inertia, delta: f64) -> Self {
        Self {
            n_pos: inertia.n_pos,
            n_neg: inertia.n_neg,
            n_zero: inertia.n_zero,
            delta,
        }
    }

    pub fn inertia(&self) -> Inertia {
        Inertia {
            n_pos: self.n_pos,
            n_neg: self.n_neg,
            n_zero: self.n_zero,
        }
    }
}

/// Factors the system as given and solves for every right-hand side.
pub fn factor_and_solve(sys: &SaddleSystem) -> Result<(DMatrix<f64>, InertiaRecord)> {
    sys.validate()?;
    let k = sys.assemble(0.0);
    let f = Ldlt::factor(&k, ZERO_PIVOT_TOL);
    let sol = f.solve(&sys.rhs)?;
    Ok((sol, InertiaRecord::new(f.inertia(), 0.0)))
}

/// `‖K w − rhs‖_∞` for the system assembled with primal shift `delta`.
pub fn solve_residual(sys: &SaddleSystem, delta: f64, sol: &DMatrix<f64>) -> f64 {
    let k = sys.assemble(delta);
    inf_norm_mat(&(k * sol - &sys.rhs))
}

/// Geometric primal-shift schedule used to restore the saddle-point inertia.
#[derive(Debug, Clone)]
pub struct InertiaCorrector {
    pub delta0: f64,
    pub growth: f64,
    pub delta_max: f64,
    last_delta: f64,
}

impl Default for InertiaCorrector {
    fn default() -> Self {
        Self {
            delta0: 1e-9,
            growth: 8.0,
            delta_max: 1e6,
            last_delta: 0.0,
        }
    }
}

impl InertiaCorrector {
    pub fn last_delta(&self) -> f64 {
        self.last_delta
    }

    pub fn reset(&mut self) {
        self.last_delta = 0.0;
    }

    /// Factors `sys`, growing the primal shift until the inertia is
    /// `(n_primal, n_dual, 0)`. The shifts tried are non-decreasing.
    pub fn factor(&mut self, sys: &SaddleSystem) -> Result<(Ldlt, InertiaRecord)> {
        sys.validate()?;
        let target = sys.target_inertia();

        let f = Ldlt::factor(&sys.assemble(0.0), ZERO_PIVOT_TOL);
        if f.inertia() == target {
            let rec = InertiaRecord::new(f.inertia(), 0.0);
            return Ok((f, rec));
        }

        let mut delta = if self.last_delta > 0.0 {
            (self.last_delta / self.growth).max(self.delta0)
        } else {
            self.delta0
        };
        loop {
            if delta > self.delta_max {
                return Err(Error::Regularization(self.delta_max));
            }
            let f = Ldlt::factor(&sys.assemble(delta), ZERO_PIVOT_TOL);
            if f.inertia() == target {
                self.last_delta = delta;
                log::trace!("inertia corrected with delta = {delta:e}");
                let rec = InertiaRecord::new(f.inertia(), delta);
                return Ok((f, rec));
            }
            delta *= self.growth;
        }
    }
}

/// Regularizes `sys` until its inertia is correct and solves it.
///
/// Returns the solution columns, the inertia record and the shifted system.
pub fn regularize_until_correct(
    sys: &SaddleSystem,
    corrector: &mut InertiaCorrector,
) -> Result<(DMatrix<f64>, InertiaRecord, SaddleSystem)> {
    let (f, rec) = corrector.factor(sys)?;
    let sol = f.solve(&sys.rhs)?;
    let mut shifted = sys.clone();
    for i in 0..shifted.n_primal() {
        shifted.h[(i, i)] += rec.delta;
    }
    Ok((sol, rec, shifted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unconstrained(h: DMatrix<f64>, rhs: DVector<f64>) -> SaddleSystem {
        let n = h.nrows();
        SaddleSystem {
            h,
            jeq: DMatrix::zeros(0, n),
            jineq_active: DMatrix::zeros(0, n),
            mu_e: 1.0,
            mu_i: 1.0,
            rhs: DMatrix::from_column_slice(n, 1, rhs.as_slice()),
        }
    }

    #[test]
    fn three_by_three_hand_example() {
        // [[1,0,1],[0,1,0],[1,0,-1]] w = (1,0,0)  =>  w = (0.5, 0, 0.5)
        let sys = SaddleSystem {
            h: DMatrix::identity(2, 2),
            jeq: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            jineq_active: DMatrix::zeros(0, 2),
            mu_e: 1.0,
            mu_i: 1.0,
            rhs: DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
        };
        let oracle = sys.assemble(0.0).try_inverse().unwrap() * &sys.rhs;
        let (w, rec) = factor_and_solve(&sys).unwrap();
        for (a, b) in w.iter().zip([0.5, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((w - oracle).amax() < 1e-14);
        assert_eq!((rec.n_pos, rec.n_neg, rec.n_zero), (2, 1, 0));
    }

    #[test]
    fn unconstrained_spd_reduces_to_newton() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let g = DVector::from_vec(vec![1.0, 2.0]);
        let sys = unconstrained(h.clone(), -&g);
        let (dx, rec) = factor_and_solve(&sys).unwrap();
        let expected = -(h.try_inverse().unwrap() * g);
        assert!((dx.column(0) - expected).amax() < 1e-14);
        assert_eq!((rec.n_pos, rec.n_neg, rec.n_zero), (2, 0, 0));
    }

    #[test]
    fn random_spd_with_constraints_multiply_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..8);
            let ne = rng.random_range(0..=n);
            let na = rng.random_range(0..4);
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let h = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
            let sys = SaddleSystem {
                h,
                jeq: DMatrix::from_fn(ne, n, |_, _| rng.random_range(-1.0..1.0)),
                jineq_active: DMatrix::from_fn(na, n, |_, _| rng.random_range(-1.0..1.0)),
                mu_e: rng.random_range(1e-3..1.0),
                mu_i: rng.random_range(1e-3..1.0),
                rhs: DMatrix::from_fn(n + ne + na, 2, |_, _| rng.random_range(-1.0..1.0)),
            };
            let (w, rec) = factor_and_solve(&sys).unwrap();
            assert_eq!(rec.inertia(), sys.target_inertia());
            assert!(solve_residual(&sys, 0.0, &w) <= 1e-10);
        }
    }

    #[test]
    fn positive_definite_needs_no_shift() {
        let sys = unconstrained(DMatrix::identity(3, 3), DVector::from_element(3, 1.0));
        let mut corr = InertiaCorrector::default();
        let (_, rec, _) = regularize_until_correct(&sys, &mut corr).unwrap();
        assert_eq!(rec.delta, 0.0);
    }

    #[test]
    fn indefinite_primal_block_is_shifted_past_its_eigenvalue() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
        let sys = unconstrained(h, DVector::from_element(2, 1.0));
        let mut corr = InertiaCorrector::default();
        let (_, rec, shifted) = regularize_until_correct(&sys, &mut corr).unwrap();
        assert!(rec.delta > 1.0);
        assert_eq!((rec.n_pos, rec.n_neg, rec.n_zero), (2, 0, 0));
        assert!(shifted.h[(0, 0)] > 0.0);
        // Warm start: the next solve starts from delta/8 and still succeeds.
        let (_, rec2, _) = regularize_until_correct(&sys, &mut corr).unwrap();
        assert!(rec2.delta > 1.0 && rec2.delta <= rec.delta * 8.0);
    }

    #[test]
    fn hopeless_system_fails_after_delta_max() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-1e9, 1.0]));
        let sys = unconstrained(h, DVector::from_element(2, 1.0));
        let mut corr = InertiaCorrector::default();
        assert!(matches!(
            regularize_until_correct(&sys, &mut corr),
            Err(Error::Regularization(_))
        ));
    }

    #[test]
    fn rejects_nonpositive_dual_weights() {
        let mut sys = unconstrained(DMatrix::identity(1, 1), DVector::from_element(1, 1.0));
        sys.mu_e = 0.0;
        assert!(matches!(factor_and_solve(&sys), Err(Error::InvalidParameter(_))));
    }
}
