//! One-sided feasibility screen.
//!
//! The scaling condition is decided exactly at validation time. The subspace
//! condition `dim V <= sum_j p_j dim(B_j V)` can only be probed on a finite
//! family of subspaces, so a clean report means "no violation found", never
//! "feasible".

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datum::BlDatum;
use crate::error::Error;
use crate::linalg::{null_space, numerical_rank, orthonormalize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    ConsistentWithFeasible,
    InfeasibleWitness,
    ScalingViolation,
    RankDeficient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenConfig {
    /// Random subspaces drawn per dimension `1..n-1`.
    pub random_subspaces: usize,
    pub seed: u64,
    /// Largest dimension of enumerated coordinate subspaces.
    pub coordinate_dim_cap: usize,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self {
            random_subspaces: 16,
            seed: 0,
            coordinate_dim_cap: 3,
        }
    }
}

/// A subspace that violates the dimension condition, with the ranks that
/// prove it: `c * dim > sum_j c_j * image_dims[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    /// Orthonormal basis, one column per basis vector.
    pub basis: DMatrix<f64>,
    pub dim: usize,
    pub image_dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub checked_subspaces: usize,
    pub seed: u64,
}

impl FeasibilityReport {
    /// Report for a datum that failed validation before screening; `None`
    /// for errors that are not feasibility verdicts (schema, shapes).
    pub fn from_validation_error(err: &Error) -> Option<Self> {
        let verdict = match err {
            Error::ScalingViolation { .. } => Verdict::ScalingViolation,
            Error::RankDeficient { .. } => Verdict::RankDeficient,
            _ => return None,
        };
        Some(Self {
            verdict,
            witness: None,
            checked_subspaces: 0,
            seed: 0,
        })
    }
}

/// Integer check of the dimension condition on the span of `basis`.
/// Returns the witness when `c * dim V > sum_j c_j dim(B_j V)`.
pub fn check_subspace(d: &BlDatum, basis: &DMatrix<f64>) -> Option<Witness> {
    let dim = numerical_rank(basis);
    if dim == 0 {
        return None;
    }
    let image_dims: Vec<usize> = d
        .maps()
        .iter()
        .map(|b| numerical_rank(&(b * basis)))
        .collect();
    let lhs = d.denominator() as u128 * dim as u128;
    let rhs: u128 = d
        .numerators()
        .iter()
        .zip(&image_dims)
        .map(|(&c, &r)| c as u128 * r as u128)
        .sum();
    (lhs > rhs).then(|| Witness {
        basis: orthonormalize(basis),
        dim,
        image_dims,
    })
}

fn coordinate_subspaces(n: usize, cap: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::new();
    let max_k = cap.min(n.saturating_sub(1));
    for k in 1..=max_k {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let mut basis = DMatrix::zeros(n, k);
            for (col, &i) in idx.iter().enumerate() {
                basis[(i, col)] = 1.0;
            }
            out.push(basis);
            // Next k-combination in lexicographic order.
            let mut pos = k;
            while pos > 0 && idx[pos - 1] == n - k + pos - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            idx[pos - 1] += 1;
            for q in pos..k {
                idx[q] = idx[q - 1] + 1;
            }
        }
    }
    out
}

fn kernel_subspaces(d: &BlDatum) -> Vec<DMatrix<f64>> {
    let mut out = Vec::new();
    let kernels: Vec<DMatrix<f64>> = d.maps().iter().map(null_space).collect();
    out.extend(kernels.iter().filter(|k| k.ncols() > 0).cloned());
    for i in 0..d.m() {
        for j in (i + 1)..d.m() {
            if kernels[i].ncols() == 0 || kernels[j].ncols() == 0 {
                continue;
            }
            let (bi, bj) = (d.map(i), d.map(j));
            let mut stacked = DMatrix::zeros(bi.nrows() + bj.nrows(), d.n());
            stacked.view_mut((0, 0), (bi.nrows(), d.n())).copy_from(bi);
            stacked
                .view_mut((bi.nrows(), 0), (bj.nrows(), d.n()))
                .copy_from(bj);
            let common = null_space(&stacked);
            if common.ncols() > 0 {
                out.push(common);
            }
        }
    }
    out
}

/// Screens the subspace condition on coordinate subspaces, kernels of the
/// maps, pairwise kernel intersections and seeded random subspaces.
pub fn feasibility_screen(d: &BlDatum, cfg: &ScreenConfig) -> FeasibilityReport {
    let n = d.n();
    let mut checked = 0usize;
    let found = |witness: Witness, checked: usize| FeasibilityReport {
        verdict: Verdict::InfeasibleWitness,
        witness: Some(witness),
        checked_subspaces: checked,
        seed: cfg.seed,
    };

    for basis in coordinate_subspaces(n, cfg.coordinate_dim_cap)
        .into_iter()
        .chain(kernel_subspaces(d))
    {
        checked += 1;
        if let Some(w) = check_subspace(d, &basis) {
            return found(w, checked);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for k in 1..n {
        for _ in 0..cfg.random_subspaces {
            let g = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
            checked += 1;
            if let Some(w) = check_subspace(d, &orthonormalize(&g)) {
                return found(w, checked);
            }
        }
    }

    FeasibilityReport {
        verdict: Verdict::ConsistentWithFeasible,
        witness: None,
        checked_subspaces: checked,
        seed: cfg.seed,
    }
}
