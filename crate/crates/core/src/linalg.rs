//! Dense helpers shared by the geometry, datum and scaling modules.
//!
//! Storage and Cholesky factors use nalgebra; symmetric eigendecompositions
//! and SVDs go through faer, whose small-matrix kernels stay backward stable
//! on widely scaled input.

use faer::{Mat, Side};
use nalgebra::DMatrix;

/// Relative threshold for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest |m_ij - m_ji| divided by the Frobenius norm (absolute when the norm is zero).
pub(crate) fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    let scale = m.norm();
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
pub(crate) struct SymEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Eigen-decomposition of a symmetric matrix (input is symmetrized first).
/// Non-finite input yields NaN eigenvalues, which every caller rejects.
pub(crate) fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    match to_faer(&symmetrize(m)).self_adjoint_eigen(Side::Lower) {
        Ok(e) => SymEigen {
            values: e.S().column_vector().iter().copied().collect(),
            vectors: from_faer(e.U()),
        },
        Err(_) => SymEigen {
            values: vec![f64::NAN; n],
            vectors: DMatrix::identity(n, n),
        },
    }
}

/// `V diag(f(lambda)) V^T` for a symmetric matrix.
pub(crate) fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = sym_eigen(m);
    spectral_apply(&eig, f)
}

pub(crate) fn spectral_apply(eig: &SymEigen, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let vecs = &eig.vectors;
    let mut scaled = vecs.clone();
    for (k, &lambda) in eig.values.iter().enumerate() {
        scaled.column_mut(k).scale_mut(f(lambda));
    }
    symmetrize(&(scaled * vecs.transpose()))
}

/// Left singular vectors (as columns) and singular values, descending;
/// `None` when the SVD fails on non-finite input.
pub(crate) fn left_svd(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, Vec<f64>)> {
    let svd = to_faer(m).svd().ok()?;
    Some((
        from_faer(svd.U()),
        svd.S().column_vector().iter().copied().collect(),
    ))
}

/// Singular values, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    to_faer(m)
        .singular_values()
        .unwrap_or_else(|_| vec![f64::NAN; m.nrows().min(m.ncols())])
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eigen(m)
        .values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Numerical rank with threshold `RANK_TOL * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = singular_values(m);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax <= 0.0 || !smax.is_finite() {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let ncols = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(ncols, ncols);
    }
    // Pad to at least square so the SVD yields a full right basis.
    let padded = if m.nrows() < ncols {
        let mut p = DMatrix::zeros(ncols, ncols);
        p.view_mut((0, 0), (m.nrows(), ncols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let Ok(svd) = to_faer(&padded).svd() else {
        return DMatrix::zeros(ncols, 0);
    };
    let sv: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let v = from_faer(svd.V());
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let cut = if smax > 0.0 {
        RANK_TOL * smax
    } else {
        f64::INFINITY
    };
    let null_cols: Vec<usize> = (0..sv.len()).filter(|&k| !(sv[k] > cut)).collect();
    let mut basis = DMatrix::zeros(ncols, null_cols.len());
    for (col, &k) in null_cols.iter().enumerate() {
        basis.set_column(col, &v.column(k));
    }
    basis
}

/// Orthonormal basis of the column span of `m` (thin QR, columns kept as given).
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}

/// Block matrix `[[a, b], [b^T, c]]`.
pub fn block2x2(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let p = a.nrows();
    let q = c.nrows();
    let mut out = DMatrix::zeros(p + q, p + q);
    out.view_mut((0, 0), (p, p)).copy_from(a);
    out.view_mut((0, p), (p, q)).copy_from(b);
    out.view_mut((p, 0), (q, p)).copy_from(&b.transpose());
    out.view_mut((p, p), (q, q)).copy_from(c);
    out
}

/// Row-major nested vectors, the layout used in every JSON surface.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Inverse of [`to_rows`]; `None` when rows are ragged.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_and_null_space_of_projection() {
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_eq!(numerical_rank(&b), 1);
        let ns = null_space(&b);
        assert_eq!(ns.ncols(), 1);
        assert!((ns[(0, 0)]).abs() < 1e-14);
        assert!((ns[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_threshold_is_relative() {
        let m = DMatrix::from_row_slice(2, 2, &[1e6, 0.0, 0.0, 1e-5]);
        assert_eq!(numerical_rank(&m), 1);
        let m = DMatrix::from_row_slice(2, 2, &[1e6, 0.0, 0.0, 1e-3]);
        assert_eq!(numerical_rank(&m), 2);
    }

    #[test]
    fn null_space_of_full_rank_square_is_empty() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(null_space(&m).ncols(), 0);
    }

    #[test]
    fn eigen_is_backward_stable_on_widely_scaled_input() {
        // Entries spanning sixteen orders of magnitude.
        let m = DMatrix::from_row_slice(3, 3, &[1e8, 1.0, 1e-8, 1.0, 1e-8, 1.0, 1e-8, 1.0, 1.0]);
        let e = sym_eigen(&m);
        let rec = spectral_apply(&e, |l| l);
        assert!((rec - &m).norm() / m.norm() < 1e-14);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn singular_values_descending() {
        let m = DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, 4.0, 0.0]);
        let sv = singular_values(&m);
        assert!((sv[0] - 4.0).abs() < 1e-14 && (sv[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rows_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(from_rows(&to_rows(&m)).unwrap(), m);
        assert!(from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_none());
    }
}
