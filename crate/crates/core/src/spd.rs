//! Geometry of the positive-definite cone under the affine-invariant metric
//! `g_X(v, w) = Tr(X^-1 v X^-1 w)`, the Hessian of `-log det`.
//!
//! Geodesics are computed from Cholesky factors and one SVD; anything
//! determinant-valued goes through a Cholesky factor and stays in the log
//! domain.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{
    left_svd, min_eigenvalue, relative_asymmetry, spectral_apply, sym_apply, sym_eigen, symmetrize,
};

/// Default relative symmetry tolerance accepted on construction.
pub const SYM_TOL: f64 = 1e-12;

/// A symmetric positive-definite matrix. Construction symmetrizes the input
/// and proves positivity with a Cholesky factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    m: DMatrix<f64>,
}

/// A symmetric (possibly indefinite) matrix: a tangent vector of the cone.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentMatrix {
    m: DMatrix<f64>,
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidDatum("empty matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn check_symmetric(m: &DMatrix<f64>, sym_tol: f64) -> Result<()> {
    let asym = relative_asymmetry(m);
    if asym > sym_tol {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

pub(crate) fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite {
        min_eigenvalue: min_eigenvalue(m),
    })
}

/// `2 * sum(log diag(L))` for a matrix known to be symmetric.
pub(crate) fn log_det_raw(m: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(m)?;
    let l = chol.l_dirty();
    Ok(2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
pub(crate) fn spd_inverse_raw(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m)?.inverse()))
}

impl SpdMatrix {
    /// Validates with the default symmetry tolerance.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(m, SYM_TOL)
    }

    pub fn with_tolerance(m: DMatrix<f64>, sym_tol: f64) -> Result<Self> {
        check_square(&m)?;
        check_symmetric(&m, sym_tol)?;
        Self::from_symmetric_part(m)
    }

    /// Skips the asymmetry check; used on products formed inside iterative
    /// solvers where round-off asymmetry is expected.
    pub(crate) fn from_symmetric_part(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        let m = symmetrize(&m);
        cholesky(&m)?;
        Ok(Self { m })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(
            &nalgebra::DVector::from_column_slice(diag),
        ))
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.m
    }

    pub fn inverse(&self) -> SpdMatrix {
        // The inverse of an SPD matrix is SPD; fall back to the spectral form
        // if the factorization of the symmetrized inverse is marginal.
        let inv = spd_inverse_raw(&self.m).unwrap_or_else(|_| sym_apply(&self.m, |l| 1.0 / l));
        SpdMatrix { m: inv }
    }

    pub fn scale(&self, lambda: f64) -> Result<SpdMatrix> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: lambda,
            });
        }
        Ok(SpdMatrix {
            m: &self.m * lambda,
        })
    }

    /// Rescales to unit determinant.
    pub fn normalize_det(&self) -> SpdMatrix {
        let ld = log_det(self).expect("SpdMatrix is positive definite");
        let n = self.dim() as f64;
        SpdMatrix {
            m: &self.m * (-ld / n).exp(),
        }
    }

    /// Matrix power `X^t` for any real `t`.
    pub fn pow(&self, t: f64) -> Result<SpdMatrix> {
        let eig = sym_eigen(&self.m);
        if let Some(&bad) = eig.values.iter().find(|&&l| l <= 0.0) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: bad,
            });
        }
        SpdMatrix::from_symmetric_part(spectral_apply(&eig, |l| l.powf(t)))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = sym_eigen(&self.m).values;
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn condition_number(&self) -> f64 {
        let ev = self.eigenvalues();
        ev[ev.len() - 1] / ev[0]
    }

    /// `(X^{1/2}, X^{-1/2})` from a single eigendecomposition.
    pub(crate) fn sqrt_and_inv_sqrt(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let eig = sym_eigen(&self.m);
        if let Some(&bad) = eig.values.iter().find(|&&l| l <= 0.0) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: bad,
            });
        }
        Ok((
            spectral_apply(&eig, f64::sqrt),
            spectral_apply(&eig, |l| 1.0 / l.sqrt()),
        ))
    }
}

impl AsRef<DMatrix<f64>> for SpdMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.m
    }
}

impl TangentMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        check_symmetric(&m, SYM_TOL)?;
        Ok(Self { m: symmetrize(&m) })
    }

    pub(crate) fn from_symmetric_part(m: DMatrix<f64>) -> Self {
        Self { m: symmetrize(&m) }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(
            &nalgebra::DVector::from_column_slice(diag),
        ))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.m
    }
}

impl AsRef<DMatrix<f64>> for TangentMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.m
    }
}

fn same_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Principal square root.
pub fn spd_sqrt(x: &SpdMatrix) -> Result<SpdMatrix> {
    x.pow(0.5)
}

/// Point `X #_t Y = X^{1/2} (X^{-1/2} Y X^{-1/2})^t X^{1/2}` on the geodesic
/// from `X` (t = 0) to `Y` (t = 1).
pub fn geodesic(x: &SpdMatrix, y: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    same_dim(x.dim(), y.dim())?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidConfig(format!(
            "geodesic parameter {t} outside [0, 1]"
        )));
    }
    // With X = Lx Lx^T and Y = Ly Ly^T, X^{-1/2} Y X^{-1/2} is congruent to
    // M M^T for M = Lx^-1 Ly, so X #_t Y = Lx U S^{2t} U^T Lx^T where
    // M = U S V^T. Working with M avoids squaring the conditioning.
    let lx = cholesky(x.as_matrix())?.unpack();
    let ly = cholesky(y.as_matrix())?.unpack();
    let m = lx
        .solve_lower_triangular(&ly)
        .ok_or(Error::SingularOperator)?;
    let (u, sv) = left_svd(&m).ok_or(Error::NonFinite)?;
    let mut scaled = u.clone();
    for (k, &sigma) in sv.iter().enumerate() {
        if !(sigma > 0.0) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: sigma,
            });
        }
        scaled.column_mut(k).scale_mut(sigma.powf(2.0 * t));
    }
    let inner_t = symmetrize(&(scaled * u.transpose()));
    SpdMatrix::from_symmetric_part(&lx * inner_t * lx.transpose())
}

/// Matrix geometric mean `P # Q`, the geodesic midpoint.
pub fn geometric_mean(p: &SpdMatrix, q: &SpdMatrix) -> Result<SpdMatrix> {
    geodesic(p, q, 0.5)
}

/// Riemannian exponential map `X^{1/2} exp(X^{-1/2} V X^{-1/2}) X^{1/2}`.
pub fn exp_map(x: &SpdMatrix, v: &TangentMatrix) -> Result<SpdMatrix> {
    same_dim(x.dim(), v.dim())?;
    let (sqrt, inv_sqrt) = x.sqrt_and_inv_sqrt()?;
    let inner = &inv_sqrt * v.as_matrix() * &inv_sqrt;
    let e = sym_apply(&inner, f64::exp);
    SpdMatrix::from_symmetric_part(&sqrt * e * &sqrt)
}

/// Affine-invariant inner product `Tr(X^-1 v X^-1 w)`.
pub fn metric_inner(x: &SpdMatrix, v: &TangentMatrix, w: &TangentMatrix) -> Result<f64> {
    same_dim(x.dim(), v.dim())?;
    same_dim(x.dim(), w.dim())?;
    let chol = cholesky(x.as_matrix())?;
    let xv = chol.solve(v.as_matrix());
    let xw = chol.solve(w.as_matrix());
    Ok((xv * xw).trace())
}

/// `P <= Q` in the Loewner order: the smallest eigenvalue of `Q - P` is at
/// least `-tol * (1 + ||Q - P||_F)`.
pub fn loewner_leq(
    p: &impl AsRef<DMatrix<f64>>,
    q: &impl AsRef<DMatrix<f64>>,
    tol: f64,
) -> Result<bool> {
    let (p, q) = (p.as_ref(), q.as_ref());
    same_dim(p.nrows(), q.nrows())?;
    let diff = q - p;
    Ok(min_eigenvalue(&diff) >= -tol * (1.0 + diff.norm()))
}

/// `log det X` from the Cholesky diagonal; the determinant itself is never formed.
pub fn log_det(x: &SpdMatrix) -> Result<f64> {
    log_det_raw(x.as_matrix())
}
