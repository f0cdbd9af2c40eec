//! Dense symmetric indefinite `P K Pᵀ = L D Lᵀ` with Bunch-Kaufman pivoting.
//!
//! `D` is block diagonal with 1×1 and 2×2 blocks, so the inertia of `K` can
//! be read off the blocks (Sylvester's law of inertia).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Bunch-Kaufman growth constant `(1 + √17) / 8`.
const BK_ALPHA: f64 = 0.640_388_203_202_208_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_zero: usize,
}

#[derive(Debug, Clone, Copy)]
enum Pivot {
    One(f64),
    Two([f64; 3]), // (d11, d21, d22)
}

#[derive(Debug, Clone)]
pub struct Ldlt {
    l: DMatrix<f64>,
    pivots: Vec<(usize, Pivot)>,
    perm: Vec<usize>,
    inertia: Inertia,
}

impl Ldlt {
    /// Factors the symmetric matrix `k`. Only the lower triangle is read.
    ///
    /// Pivots with magnitude at most `zero_tol` times the largest diagonal
    /// magnitude (largest entry if the diagonal is zero) count as zero.
    pub fn factor(k: &DMatrix<f64>, zero_tol: f64) -> Ldlt {
        let n = k.nrows();
        assert_eq!(n, k.ncols(), "LDLT of a non-square matrix");

        let mut w = DMatrix::from_fn(n, n, |i, j| if i >= j { k[(i, j)] } else { k[(j, i)] });
        let mut l = DMatrix::identity(n, n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::with_capacity(n);
        let mut inertia = Inertia::default();

        let scale = {
            let d = (0..n).fold(0.0_f64, |m, i| m.max(w[(i, i)].abs()));
            if d > 0.0 {
                d
            } else {
                w.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
            }
        };
        let tol = zero_tol * scale;

        let mut k0 = 0;
        while k0 < n {
            let absakk = w[(k0, k0)].abs();
            let (imax, colmax) = ((k0 + 1)..n)
                .map(|i| (i, w[(i, k0)].abs()))
                .fold((k0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });

            if absakk.max(colmax) <= tol {
                // Zero column: nothing to eliminate.
                inertia.n_zero += 1;
                pivots.push((k0, Pivot::One(0.0)));
                for i in (k0 + 1)..n {
                    l[(i, k0)] = 0.0;
                }
                k0 += 1;
                continue;
            }

            let (kp, kstep) = if absakk >= BK_ALPHA * colmax {
                (k0, 1)
            } else {
                let rowmax = (k0..n)
                    .filter(|&j| j != imax)
                    .map(|j| w[(imax, j)].abs())
                    .fold(0.0_f64, f64::max);
                if absakk * rowmax >= BK_ALPHA * colmax * colmax {
                    (k0, 1)
                } else if w[(imax, imax)].abs() >= BK_ALPHA * rowmax {
                    (imax, 1)
                } else {
                    (imax, 2)
                }
            };

            let kk = k0 + kstep - 1;
            if kp != kk {
                w.swap_rows(kk, kp);
                w.swap_columns(kk, kp);
                perm.swap(kk, kp);
                for j in 0..k0 {
                    let tmp = l[(kk, j)];
                    l[(kk, j)] = l[(kp, j)];
                    l[(kp, j)] = tmp;
                }
            }

            if kstep == 1 {
                let d = w[(k0, k0)];
                if d.abs() <= tol {
                    inertia.n_zero += 1;
                } else if d > 0.0 {
                    inertia.n_pos += 1;
                } else {
                    inertia.n_neg += 1;
                }
                pivots.push((k0, Pivot::One(d)));
                if d != 0.0 {
                    for i in (k0 + 1)..n {
                        l[(i, k0)] = w[(i, k0)] / d;
                    }
                    for j in (k0 + 1)..n {
                        let ljd = w[(j, k0)];
                        for i in j..n {
                            w[(i, j)] -= l[(i, k0)] * ljd;
                            w[(j, i)] = w[(i, j)];
                        }
                    }
                }
                k0 += 1;
            } else {
                let d11 = w[(k0, k0)];
                let d21 = w[(k0 + 1, k0)];
                let d22 = w[(k0 + 1, k0 + 1)];
                let det = d11 * d22 - d21 * d21;
                // Eigenvalues of the 2×2 block.
                let half_tr = 0.5 * (d11 + d22);
                let disc = (0.25 * (d11 - d22) * (d11 - d22) + d21 * d21).sqrt();
                for ev in [half_tr + disc, half_tr - disc] {
                    if ev.abs() <= tol {
                        inertia.n_zero += 1;
                    } else if ev > 0.0 {
                        inertia.n_pos += 1;
                    } else {
                        inertia.n_neg += 1;
                    }
                }
                pivots.push((k0, Pivot::Two([d11, d21, d22])));
                for i in (k0 + 2)..n {
                    let wi1 = w[(i, k0)];
                    let wi2 = w[(i, k0 + 1)];
                    l[(i, k0)] = (d22 * wi1 - d21 * wi2) / det;
                    l[(i, k0 + 1)] = (d11 * wi2 - d21 * wi1) / det;
                }
                for j in (k0 + 2)..n {
                    let wj1 = w[(j, k0)];
                    let wj2 = w[(j, k0 + 1)];
                    for i in j..n {
                        w[(i, j)] -= l[(i, k0)] * wj1 + l[(i, k0 + 1)] * wj2;
                        w[(j, i)] = w[(i, j)];
                    }
                }
                k0 += 2;
            }
        }

        Ldlt {
            l,
            pivots,
            perm,
            inertia,
        }
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solves `K X = B` in place for every column of `b`.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, b: &mut DMatrix<f64>) -> Result<()> {
        if self.inertia.n_zero > 0 {
            return Err(Error::Singular(self.inertia.n_zero));
        }
        let n = self.dim();
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "LDLT solve: rhs has {} rows, factor has {n}",
                b.nrows()
            )));
        }
        for c in 0..b.ncols() {
            let mut y: Vec<f64> = self.perm.iter().map(|&p| b[(p, c)]).collect();
            // L z = P b
            for j in 0..n {
                let yj = y[j];
                if yj != 0.0 {
                    for i in (j + 1)..n {
                        y[i] -= self.l[(i, j)] * yj;
                    }
                }
            }
            // D w = z
            for &(k0, piv) in &self.pivots {
                match piv {
                    Pivot::One(d) => y[k0] /= d,
                    Pivot::Two([d11, d21, d22]) => {
                        let det = d11 * d22 - d21 * d21;
                        let (a, bb) = (y[k0], y[k0 + 1]);
                        y[k0] = (d22 * a - d21 * bb) / det;
                        y[k0 + 1] = (d11 * bb - d21 * a) / det;
                    }
                }
            }
            // Lᵀ v = w
            for j in (0..n).rev() {
                let mut s = y[j];
                for i in (j + 1)..n {
                    s -= self.l[(i, j)] * y[i];
                }
                y[j] = s;
            }
            for (i, &p) in self.perm.iter().enumerate() {
                b[(p, c)] = y[i];
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut x = b.clone();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a + a.transpose()
    }

    fn eigen_inertia(k: &DMatrix<f64>) -> Inertia {
        let ev = k.clone().symmetric_eigen().eigenvalues;
        let mut out = Inertia::default();
        for v in ev.iter() {
            if v.abs() < 1e-10 {
                out.n_zero += 1;
            } else if *v > 0.0 {
                out.n_pos += 1;
            } else {
                out.n_neg += 1;
            }
        }
        out
    }

    #[test]
    fn inertia_matches_eigenvalues_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..12 {
            for _ in 0..20 {
                let k = random_symmetric(&mut rng, n);
                let f = Ldlt::factor(&k, 1e-14);
                assert_eq!(f.inertia(), eigen_inertia(&k), "n = {n}");
            }
        }
    }

    #[test]
    fn solves_random_indefinite_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..15 {
            let k = random_symmetric(&mut rng, n);
            let b = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
            let x = Ldlt::factor(&k, 1e-14).solve(&b).unwrap();
            let r = &k * &x - &b;
            let scale = 1.0 + b.amax();
            assert!(r.amax() <= 1e-9 * scale * (1.0 + x.amax()), "n={n} r={}", r.amax());
        }
    }

    #[test]
    fn zero_diagonal_forces_two_by_two_pivot() {
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let f = Ldlt::factor(&k, 1e-12);
        assert_eq!(
            f.inertia(),
            Inertia {
                n_pos: 1,
                n_neg: 1,
                n_zero: 0
            }
        );
        let x = f.solve(&DMatrix::from_column_slice(2, 1, &[2.0, 3.0])).unwrap();
        assert!((x[(0, 0)] - 3.0).abs() < 1e-15 && (x[(1, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn singular_matrix_reports_zero_pivot() {
        let k = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, -2.0]);
        let f = Ldlt::factor(&k, 1e-12);
        assert_eq!(f.inertia().n_zero, 1);
        assert!(matches!(
            f.solve(&DMatrix::zeros(3, 1)),
            Err(Error::Singular(1))
        ));
    }
}
