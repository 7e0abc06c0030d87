//! Reduction of a rational-exponent datum to operator scaling, and operator
//! capacity by alternating normalization.
//!
//! With `p_j = c_j / c`, the map `B_j` is copied `c_j` times. Copy `i`
//! (belonging to map `delta(i)`) becomes the Kraus operator `T_i`, an
//! `(n c) x n` matrix whose `i`-th row block is `B_delta(i)` and whose other
//! blocks are zero. The scaling condition makes the row blocks add up to
//! exactly `n c` rows. The operator is `T(X) = sum_i T_i^T X T_i`, taking
//! `S^{nc}` to `S^n`, and `cap(T) = 1 / BL(B, p)^2` with the normalization
//! `cap(T) = inf_{det X = 1} det(T(X) / c)`.

use nalgebra::DMatrix;

use crate::datum::BlDatum;
use crate::error::{Error, Result};
use crate::linalg::{sym_apply, symmetrize};
use crate::solvers::SolverConfig;
use crate::spd::{log_det_raw, SpdMatrix};

pub const DEFAULT_DIM_CAP: usize = 4096;

/// Kraus presentation of the operator built from a datum.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    pub input_dim: usize,
    pub output_dim: usize,
    /// One `(n c) x n` matrix per copy.
    pub kraus: Vec<DMatrix<f64>>,
    pub c: u64,
    /// `delta`: copy index to original map index (0-based).
    pub copy_map: Vec<usize>,
    /// First row of each copy's block.
    pub block_offsets: Vec<usize>,
}

/// Builds the operator-scaling instance; refuses inputs with `n c > dim_cap`.
pub fn build_scaling_operator(d: &BlDatum, dim_cap: usize) -> Result<KrausSet> {
    let n = d.n();
    let c = d.denominator();
    let input_dim = (n as u128) * (c as u128);
    if input_dim > dim_cap as u128 {
        return Err(Error::DimensionCapExceeded {
            dim: usize::try_from(input_dim).unwrap_or(usize::MAX),
            cap: dim_cap,
        });
    }
    let input_dim = input_dim as usize;

    let copy_map: Vec<usize> = d
        .numerators()
        .iter()
        .enumerate()
        .flat_map(|(j, &cj)| std::iter::repeat_n(j, cj as usize))
        .collect();

    let mut kraus = Vec::with_capacity(copy_map.len());
    let mut block_offsets = Vec::with_capacity(copy_map.len());
    let mut offset = 0usize;
    for &j in &copy_map {
        let b = d.map(j);
        let mut t = DMatrix::zeros(input_dim, n);
        t.view_mut((offset, 0), (b.nrows(), n)).copy_from(b);
        kraus.push(t);
        block_offsets.push(offset);
        offset += b.nrows();
    }
    if offset != input_dim {
        // Unreachable for validated data: sum_j c_j n_j = n c.
        return Err(Error::ScalingViolation {
            numerator: offset as u128,
            denominator: c as u128,
            n,
        });
    }

    Ok(KrausSet {
        input_dim,
        output_dim: n,
        kraus,
        c,
        copy_map,
        block_offsets,
    })
}

impl KrausSet {
    pub fn copies(&self) -> usize {
        self.kraus.len()
    }

    /// `T(X) = sum_i T_i^T X T_i`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_dim || x.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.nrows(),
            });
        }
        let mut out = DMatrix::zeros(self.output_dim, self.output_dim);
        for t in &self.kraus {
            out += t.transpose() * x * t;
        }
        Ok(symmetrize(&out))
    }

    /// Dual map `T*(Y) = sum_i T_i Y T_i^T`.
    pub fn apply_dual(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.nrows() != self.output_dim || y.ncols() != self.output_dim {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim,
                found: y.nrows(),
            });
        }
        let mut out = DMatrix::zeros(self.input_dim, self.input_dim);
        for t in &self.kraus {
            out += t * y * t.transpose();
        }
        Ok(symmetrize(&out))
    }

    /// `log det(T(X) / c)`, the capacity objective before the `det X = 1` constraint.
    pub fn log_det_normalized(&self, x: &SpdMatrix) -> Result<f64> {
        let tx = self.apply(x.as_matrix())?;
        let ld = log_det_raw(&tx).map_err(|_| Error::SingularOperator)?;
        Ok(ld - self.output_dim as f64 * (self.c as f64).ln())
    }

    /// Dimension ratio `d_in / d_out = c` used by the doubly-stochastic target.
    fn ratio(&self) -> f64 {
        self.input_dim as f64 / self.output_dim as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    pub log_cap: f64,
    /// Distance to the doubly-stochastic position:
    /// `max(||sum T^T T - I_n||_F, ||c sum T T^T - I_{nc}||_F)`.
    pub ds_residual: f64,
    /// Accumulated `L` (`nc x nc`) with scaled operators `L T_i R`.
    pub left_scaling: DMatrix<f64>,
    /// Accumulated `R` (`n x n`).
    pub right_scaling: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CapacityError {
    #[error("alternating scaling did not converge (ds_residual {:.3e} after {} iterations)", .0.ds_residual, .0.iterations)]
    NotConverged(Box<CapacityResult>),
    #[error(transparent)]
    Numerical(#[from] Error),
}

fn inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // Positive definiteness is checked first so the spectral map never sees
    // a non-positive eigenvalue.
    SpdMatrix::from_symmetric_part(m.clone()).map_err(|_| Error::SingularOperator)?;
    Ok(sym_apply(m, |l| 1.0 / l.sqrt()))
}

fn gram_sums(scaled: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let (rows, cols) = scaled[0].shape();
    let mut right = DMatrix::zeros(cols, cols);
    let mut left = DMatrix::zeros(rows, rows);
    for t in scaled {
        right += t.transpose() * t;
        left += t * t.transpose();
    }
    (symmetrize(&right), symmetrize(&left))
}

fn ds_residual(k: &KrausSet, scaled: &[DMatrix<f64>]) -> f64 {
    let (right, left) = gram_sums(scaled);
    let r = (right - DMatrix::identity(k.output_dim, k.output_dim)).norm();
    let l = (left * k.ratio() - DMatrix::identity(k.input_dim, k.input_dim)).norm();
    r.max(l)
}

/// Operator capacity by alternating right and left normalization.
///
/// Each round replaces `T_i <- T_i N^{-1/2}` with `N = sum T_i^T T_i`, then
/// `T_i <- (c P)^{-1/2} T_i` with `P = sum T_i T_i^T`. The capacity is read
/// off at `X = L^T L` rescaled to `det X = 1`.
pub fn capacity(
    k: &KrausSet,
    cfg: &SolverConfig,
) -> std::result::Result<CapacityResult, CapacityError> {
    cfg.validate()?;
    if k.kraus.is_empty() {
        return Err(Error::SingularOperator.into());
    }
    let mut scaled = k.kraus.clone();
    let mut left = DMatrix::identity(k.input_dim, k.input_dim);
    let mut right = DMatrix::identity(k.output_dim, k.output_dim);
    let mut residual = ds_residual(k, &scaled);
    let mut iterations = 0;

    while residual > cfg.tol && iterations < cfg.max_iter {
        let (n_sum, _) = gram_sums(&scaled);
        let r_step = inv_sqrt(&n_sum)?;
        for t in scaled.iter_mut() {
            *t = &*t * &r_step;
        }
        right *= &r_step;

        let (_, p_sum) = gram_sums(&scaled);
        let l_step = inv_sqrt(&(p_sum * k.ratio()))?;
        for t in scaled.iter_mut() {
            *t = &l_step * &*t;
        }
        left = l_step * left;

        iterations += 1;
        residual = ds_residual(k, &scaled);
        if !residual.is_finite() {
            return Err(Error::SingularOperator.into());
        }
    }

    let x = SpdMatrix::from_symmetric_part(left.transpose() * &left)
        .map_err(|_| Error::SingularOperator)?;
    let log_cap = k.log_det_normalized(&x.normalize_det())?;
    let result = CapacityResult {
        log_cap,
        ds_residual: residual,
        left_scaling: left,
        right_scaling: right,
        iterations,
        converged: residual <= cfg.tol,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(CapacityError::NotConverged(Box::new(result)))
    }
}

/// `log BL = -log_cap / 2`.
pub fn log_bl_from_capacity(r: &CapacityResult) -> std::result::Result<f64, CapacityError> {
    if !r.converged {
        return Err(CapacityError::NotConverged(Box::new(r.clone())));
    }
    Ok(-0.5 * r.log_cap)
}
