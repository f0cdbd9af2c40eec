//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

/// Componentwise projection onto the nonnegative orthant, `[z]_+`.
pub fn pos_part(z: &DVector<f64>) -> DVector<f64> {
    z.map(|v| v.max(0.0))
}

/// Componentwise projection onto the nonpositive orthant, `[z]_-`.
pub fn neg_part(z: &DVector<f64>) -> DVector<f64> {
    z.map(|v| v.min(0.0))
}

/// Infinity norm; zero for empty vectors.
pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn inf_norm_mat(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Rows of `m` listed in `rows`, in order.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn select_entries(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&i| v[i]))
}

/// Copy of `v` with every entry outside `rows` set to zero.
pub fn mask_entries(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for &i in rows {
        out[i] = v[i];
    }
    out
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projections_split_vector() {
        let z = DVector::from_vec(vec![-1.5, 0.0, 2.0]);
        assert_eq!(pos_part(&z), DVector::from_vec(vec![0.0, 0.0, 2.0]));
        assert_eq!(neg_part(&z), DVector::from_vec(vec![-1.5, 0.0, 0.0]));
        assert_eq!(pos_part(&z) + neg_part(&z), z);
    }

    #[test]
    fn empty_norm_is_zero() {
        assert_eq!(inf_norm(&DVector::zeros(0)), 0.0);
    }

    #[test]
    fn mask_and_select() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(mask_entries(&v, &[2]), DVector::from_vec(vec![0.0, 0.0, 3.0]));
        assert_eq!(select_entries(&v, &[0, 2]), DVector::from_vec(vec![1.0, 3.0]));
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(select_rows(&m, &[1]), DMatrix::from_row_slice(1, 2, &[3.0, 4.0]));
    }
}
