//! SVD-backed helpers shared by the fitting and voting code.
//!
//! Every rank decision, null space and least-squares solve in the crate goes
//! through [`FullSvd`], so a single relative singular-value cutoff governs
//! all of them.

use nalgebra::{DMatrix, DVector, SVD};

/// Relative cutoff used when counting the rank of fitting systems.
pub const RANK_TOL: f64 = 1e-7;

/// Relative cutoff used for least-squares solves and pseudoinverses.
pub const SOLVE_TOL: f64 = 1e-9;

/// Singular value decomposition with a complete right basis.
///
/// nalgebra returns a thin SVD, which drops right singular vectors of wide
/// matrices. Zero rows are appended until the matrix is at least square;
/// they change neither the singular values nor the null space.
#[derive(Debug, Clone)]
pub struct FullSvd {
    /// Left singular vectors of the padded matrix (`max(m, n) x n`).
    pub u: DMatrix<f64>,
    /// Singular values, sorted in descending order, length `n`.
    pub singular_values: Vec<f64>,
    /// Right singular vectors as columns (`n x n`).
    pub v: DMatrix<f64>,
    rows: usize,
}

impl FullSvd {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let padded = if m >= n {
            a.clone()
        } else {
            let mut p = DMatrix::zeros(n, n);
            p.view_mut((0, 0), (m, n)).copy_from(a);
            p
        };
        let svd = SVD::new(padded, true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v requested");
        FullSvd {
            u,
            singular_values: svd.singular_values.iter().copied().collect(),
            v: v_t.transpose(),
            rows: m,
        }
    }

    pub fn largest(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn smallest(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }

    /// Number of singular values above `rel_tol * largest`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let cutoff = rel_tol * self.largest();
        if self.largest() == 0.0 {
            return 0;
        }
        self.singular_values.iter().filter(|&&s| s > cutoff).count()
    }

    /// Orthonormal basis of the numerical kernel, one vector per column.
    pub fn null_space(&self, rank: usize) -> DMatrix<f64> {
        let n = self.v.ncols();
        self.v.columns(rank, n - rank).into_owned()
    }

    /// Right singular vector of the smallest singular value.
    pub fn last_right_vector(&self) -> DVector<f64> {
        let n = self.v.ncols();
        self.v.column(n - 1).into_owned()
    }

    /// Minimum-norm least-squares solution of `A x = b`, treating singular
    /// values below `rel_tol * largest` as zero.
    pub fn solve(&self, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
        assert_eq!(b.len(), self.rows, "right-hand side length mismatch");
        let n = self.v.ncols();
        let mut padded = DVector::zeros(self.u.nrows());
        padded.rows_mut(0, b.len()).copy_from(b);
        let utb = self.u.tr_mul(&padded);
        let cutoff = rel_tol * self.largest();
        let mut x = DVector::zeros(n);
        for (k, &s) in self.singular_values.iter().enumerate() {
            if s > cutoff && s > 0.0 {
                x.axpy(utb[k] / s, &self.v.column(k), 1.0);
            }
        }
        x
    }
}

/// Moore-Penrose pseudoinverse with a relative singular-value cutoff.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    // pinv(A) = pinv(A^T)^T lets the thin SVD work on the tall orientation.
    if m < n {
        return pseudo_inverse(&a.transpose(), rel_tol).transpose();
    }
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v requested");
    let largest = svd.singular_values.max();
    let cutoff = rel_tol * largest;
    let mut out = DMatrix::zeros(n, m);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (v_t.row(k).transpose() * u.column(k).transpose()) / s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wide_matrix_gets_complete_kernel() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let svd = FullSvd::new(&a);
        assert_eq!(svd.rank(RANK_TOL), 1);
        let ns = svd.null_space(1);
        assert_eq!(ns.ncols(), 2);
        assert!((&a * &ns).norm() < 1e-14);
        let gram = ns.transpose() * &ns;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn minimum_norm_solution_is_orthogonal_to_kernel() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 3.0]);
        let svd = FullSvd::new(&a);
        let x = svd.solve(&b, SOLVE_TOL);
        assert!((&a * &x - &b).norm() < 1e-12);
        let k = svd.null_space(2);
        assert!((k.transpose() * &x).norm() < 1e-12);
    }

    #[test]
    fn pseudo_inverse_of_rank_deficient() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p = pseudo_inverse(&a, SOLVE_TOL);
        assert_eq!(p, a);
        let w = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let pw = pseudo_inverse(&w, SOLVE_TOL);
        assert!((&w * &pw)[(0, 0)] - 1.0 < 1e-14);
    }
}
