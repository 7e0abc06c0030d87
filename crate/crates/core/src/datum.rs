//! Brascamp-Lieb data `(B, p)` and the two objectives defined on them:
//! Lieb's Gaussian ratio over tuples `A = (A_j)` and the single-matrix
//! objective `F(X) = log det X - sum_j p_j log det(B_j X B_j^T)`.

use nalgebra::DMatrix;
use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, symmetrize};
use crate::spd::{log_det, log_det_raw, spd_inverse_raw, SpdMatrix, TangentMatrix};

/// An exponent as given by the user, before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExponent {
    pub num: i64,
    pub den: i64,
}

impl RawExponent {
    pub fn new(num: i64, den: i64) -> Self {
        Self { num, den }
    }
}

/// Unvalidated datum candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDatum {
    pub n: usize,
    pub maps: Vec<DMatrix<f64>>,
    pub exponents: Vec<RawExponent>,
}

/// A validated Brascamp-Lieb datum.
///
/// Every map is surjective, exponents are stored as numerators over one
/// common (least) denominator `c`, so `p_j = c_j / c`, and the scaling
/// condition `sum_j c_j n_j = n c` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct BlDatum {
    n: usize,
    maps: Vec<DMatrix<f64>>,
    numerators: Vec<u64>,
    denominator: u64,
}

/// Validates a raw candidate.
pub fn validate_datum(raw: RawDatum) -> Result<BlDatum> {
    let RawDatum { n, maps, exponents } = raw;
    if n == 0 {
        return Err(Error::InvalidDatum(
            "ambient dimension n must be positive".into(),
        ));
    }
    if maps.is_empty() {
        return Err(Error::InvalidDatum("at least one map is required".into()));
    }
    if maps.len() != exponents.len() {
        return Err(Error::InvalidDatum(format!(
            "{} maps but {} exponents",
            maps.len(),
            exponents.len()
        )));
    }

    for (j, b) in maps.iter().enumerate() {
        if b.ncols() != n {
            return Err(Error::InvalidDatum(format!(
                "map {j} has {} columns, expected n = {n}",
                b.ncols()
            )));
        }
        if b.nrows() == 0 || b.nrows() > n {
            return Err(Error::InvalidDatum(format!(
                "map {j} has {} rows; need 1 <= n_j <= n",
                b.nrows()
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let rank = numerical_rank(b);
        if rank < b.nrows() {
            return Err(Error::RankDeficient {
                map: j,
                rank,
                rows: b.nrows(),
            });
        }
    }

    // Reduce each fraction, then bring everything to the least common denominator.
    let mut reduced = Vec::with_capacity(exponents.len());
    for (j, e) in exponents.iter().enumerate() {
        if e.den == 0 {
            return Err(Error::ZeroDenominator { map: j });
        }
        let (mut num, mut den) = (e.num, e.den);
        if den < 0 {
            num = -num;
            den = -den;
        }
        if num < 0 {
            return Err(Error::NegativeExponent { map: j });
        }
        let g = num.gcd(&den).max(1);
        reduced.push(((num / g) as u64, (den / g) as u64));
    }
    let denominator = reduced.iter().fold(1u64, |acc, &(_, d)| acc.lcm(&d));
    let numerators: Vec<u64> = reduced
        .iter()
        .map(|&(num, den)| num * (denominator / den))
        .collect();

    let weighted: u128 = numerators
        .iter()
        .zip(&maps)
        .map(|(&c, b)| c as u128 * b.nrows() as u128)
        .sum();
    let target = n as u128 * denominator as u128;
    if weighted != target {
        let g = weighted.gcd(&(denominator as u128)).max(1);
        return Err(Error::ScalingViolation {
            numerator: weighted / g,
            denominator: denominator as u128 / g,
            n,
        });
    }

    Ok(BlDatum {
        n,
        maps,
        numerators,
        denominator,
    })
}

impl BlDatum {
    /// Builds from row-major map data and `(num, den)` exponent pairs.
    pub fn from_parts(n: usize, maps: Vec<DMatrix<f64>>, exponents: &[(i64, i64)]) -> Result<Self> {
        validate_datum(RawDatum {
            n,
            maps,
            exponents: exponents
                .iter()
                .map(|&(a, b)| RawExponent::new(a, b))
                .collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.maps.len()
    }

    pub fn maps(&self) -> &[DMatrix<f64>] {
        &self.maps
    }

    pub fn map(&self, j: usize) -> &DMatrix<f64> {
        &self.maps[j]
    }

    /// `n_j`, the codomain dimension of map `j`.
    pub fn codim(&self, j: usize) -> usize {
        self.maps[j].nrows()
    }

    pub fn numerators(&self) -> &[u64] {
        &self.numerators
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn exponent(&self, j: usize) -> f64 {
        self.numerators[j] as f64 / self.denominator as f64
    }

    pub fn exponents(&self) -> Vec<f64> {
        (0..self.m()).map(|j| self.exponent(j)).collect()
    }

    /// `B_j X B_j^T`.
    pub fn push_forward(&self, j: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        let b = &self.maps[j];
        symmetrize(&(b * x * b.transpose()))
    }

    /// `sum_j p_j B_j^T (B_j X B_j^T)^{-1} B_j`, the right-hand side of the
    /// critical-point equation.
    pub fn critical_map(&self, x: &SpdMatrix) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let mut acc = DMatrix::zeros(self.n, self.n);
        for (j, b) in self.maps.iter().enumerate() {
            let p = self.exponent(j);
            if p == 0.0 {
                continue;
            }
            let inner = spd_inverse_raw(&self.push_forward(j, x.as_matrix()))?;
            acc += (b.transpose() * inner * b) * p;
        }
        Ok(symmetrize(&acc))
    }

    /// `sum_j p_j B_j^T A_j B_j`.
    pub fn aggregate(&self, a: &GaussianTuple) -> Result<DMatrix<f64>> {
        self.check_tuple(a)?;
        let mut acc = DMatrix::zeros(self.n, self.n);
        for (j, (b, aj)) in self.maps.iter().zip(&a.blocks).enumerate() {
            acc += (b.transpose() * aj.as_matrix() * b) * self.exponent(j);
        }
        Ok(symmetrize(&acc))
    }

    pub(crate) fn check_dim(&self, x: &SpdMatrix) -> Result<()> {
        if x.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.dim(),
            });
        }
        Ok(())
    }

    fn check_tuple(&self, a: &GaussianTuple) -> Result<()> {
        if a.blocks.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                found: a.blocks.len(),
            });
        }
        for (j, aj) in a.blocks.iter().enumerate() {
            if aj.dim() != self.codim(j) {
                return Err(Error::DimensionMismatch {
                    expected: self.codim(j),
                    found: aj.dim(),
                });
            }
        }
        Ok(())
    }
}

/// An m-tuple of SPD blocks, the `j`-th of size `n_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTuple {
    pub blocks: Vec<SpdMatrix>,
}

impl GaussianTuple {
    pub fn new(blocks: Vec<SpdMatrix>) -> Self {
        Self { blocks }
    }

    /// Identity blocks shaped for `d`.
    pub fn identity_for(d: &BlDatum) -> Self {
        Self {
            blocks: (0..d.m())
                .map(|j| SpdMatrix::identity(d.codim(j)))
                .collect(),
        }
    }
}

/// `log BL(B, p; A) = 1/2 [ sum_j p_j log det A_j - log det(sum_j p_j B_j^T A_j B_j) ]`.
pub fn log_bl_objective(d: &BlDatum, a: &GaussianTuple) -> Result<f64> {
    let aggregate = d.aggregate(a)?;
    let ld_aggregate = log_det_raw(&aggregate).map_err(|_| Error::SingularAggregate)?;
    let mut num = 0.0;
    for (j, aj) in a.blocks.iter().enumerate() {
        num += d.exponent(j) * log_det(aj)?;
    }
    Ok(0.5 * (num - ld_aggregate))
}

/// `F(X) = log det X - sum_j p_j log det(B_j X B_j^T)`.
pub fn f_objective(d: &BlDatum, x: &SpdMatrix) -> Result<f64> {
    d.check_dim(x)?;
    let mut value = log_det(x)?;
    for j in 0..d.m() {
        let p = d.exponent(j);
        if p == 0.0 {
            continue;
        }
        value -= p * log_det_raw(&d.push_forward(j, x.as_matrix()))?;
    }
    Ok(value)
}

/// Euclidean gradient `X^{-1} - sum_j p_j B_j^T (B_j X B_j^T)^{-1} B_j`, so
/// that the directional derivative of `F` along symmetric `Q` is `Tr(G Q)`.
pub fn f_euclidean_gradient(d: &BlDatum, x: &SpdMatrix) -> Result<TangentMatrix> {
    let rhs = d.critical_map(x)?;
    let inv = spd_inverse_raw(x.as_matrix())?;
    Ok(TangentMatrix::from_symmetric_part(inv - rhs))
}

/// Named data used throughout tests, docs and the CLI fixtures.
pub mod catalog {
    use super::*;

    fn rows(r: usize, c: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, data)
    }

    /// `B_1 = B_2 = I_2`, `p = (1/2, 1/2)`.
    pub fn hoelder() -> BlDatum {
        BlDatum::from_parts(
            2,
            vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
            &[(1, 2), (1, 2)],
        )
        .expect("valid datum")
    }

    /// Coordinate projections of R^2, `p = (1, 1)`.
    pub fn loomis_whitney() -> BlDatum {
        BlDatum::from_parts(
            2,
            vec![rows(1, 2, &[1.0, 0.0]), rows(1, 2, &[0.0, 1.0])],
            &[(1, 1), (1, 1)],
        )
        .expect("valid datum")
    }

    /// `B = ([1 0], [0 1], [1 1])`, `p = (2/3, 2/3, 2/3)`.
    pub fn young_triple() -> BlDatum {
        BlDatum::from_parts(
            2,
            vec![
                rows(1, 2, &[1.0, 0.0]),
                rows(1, 2, &[0.0, 1.0]),
                rows(1, 2, &[1.0, 1.0]),
            ],
            &[(2, 3), (2, 3), (2, 3)],
        )
        .expect("valid datum")
    }

    /// `B_1 = B_2 = [1 0]`, `p = (1, 1)`: passes the scaling condition but both
    /// maps annihilate `e_2`, so the constant is infinite.
    pub fn collapse() -> BlDatum {
        BlDatum::from_parts(
            2,
            vec![rows(1, 2, &[1.0, 0.0]), rows(1, 2, &[1.0, 0.0])],
            &[(1, 1), (1, 1)],
        )
        .expect("valid datum")
    }
}

#[cfg(test)]
mod tests {
    use super::catalog::*;
    use super::*;
    use approx::assert_relative_eq;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    fn row(data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, data.len(), data)
    }

    #[test]
    fn validate_examples() {
        let h = hoelder();
        assert_eq!(h.denominator(), 2);
        assert_eq!(h.numerators(), &[1, 1]);
        let lw = loomis_whitney();
        assert_eq!(lw.denominator(), 1);
        let bad = BlDatum::from_parts(
            2,
            vec![row(&[1.0, 0.0]), row(&[0.0, 1.0])],
            &[(1, 2), (1, 2)],
        );
        assert_eq!(
            bad.unwrap_err(),
            Error::ScalingViolation {
                numerator: 1,
                denominator: 1,
                n: 2
            }
        );
    }

    #[test]
    fn exponents_normalize_to_least_common_denominator() {
        let d = BlDatum::from_parts(
            2,
            vec![row(&[1.0, 0.0]), row(&[0.0, 1.0]), row(&[1.0, 1.0])],
            &[(4, 6), (-2, -3), (6, 9)],
        )
        .unwrap();
        assert_eq!(d.denominator(), 3);
        assert_eq!(d.numerators(), &[2, 2, 2]);
    }

    #[test]
    fn validation_errors() {
        let rank_deficient = BlDatum::from_parts(2, vec![m2(1.0, 2.0, 2.0, 4.0)], &[(1, 1)]);
        assert!(matches!(
            rank_deficient,
            Err(Error::RankDeficient {
                map: 0,
                rank: 1,
                rows: 2
            })
        ));
        let negative = BlDatum::from_parts(2, vec![DMatrix::identity(2, 2)], &[(-1, 1)]);
        assert_eq!(negative.unwrap_err(), Error::NegativeExponent { map: 0 });
        let zero_den = BlDatum::from_parts(2, vec![DMatrix::identity(2, 2)], &[(1, 0)]);
        assert_eq!(zero_den.unwrap_err(), Error::ZeroDenominator { map: 0 });
        let wrong_cols = BlDatum::from_parts(2, vec![row(&[1.0, 0.0, 0.0])], &[(1, 1)]);
        assert!(matches!(wrong_cols, Err(Error::InvalidDatum(_))));
        let too_tall = BlDatum::from_parts(1, vec![DMatrix::identity(2, 1)], &[(1, 1)]);
        assert!(matches!(too_tall, Err(Error::InvalidDatum(_))));
    }

    #[test]
    fn zero_exponents_are_allowed() {
        let d = BlDatum::from_parts(
            2,
            vec![DMatrix::identity(2, 2), row(&[1.0, 1.0])],
            &[(1, 1), (0, 5)],
        )
        .unwrap();
        assert_eq!(d.numerators(), &[1, 0]);
        assert_eq!(d.denominator(), 1);
    }

    #[test]
    fn lieb_objective_examples() {
        let h = hoelder();
        assert_eq!(
            log_bl_objective(&h, &GaussianTuple::identity_for(&h)).unwrap(),
            0.0
        );
        let a = GaussianTuple::new(vec![
            SpdMatrix::identity(2),
            SpdMatrix::from_diagonal(&[4.0, 4.0]).unwrap(),
        ]);
        // 1/2 [1/2 log 16 - log det(2.5 I)] = log 0.8
        assert_relative_eq!(
            log_bl_objective(&h, &a).unwrap(),
            0.8f64.ln(),
            epsilon = 1e-14
        );
        assert_relative_eq!(0.8f64.ln(), -0.22314, epsilon = 1e-5);

        let lw = loomis_whitney();
        for (a1, a2) in [(1.0, 1.0), (0.01, 50.0), (3.0, 7.5)] {
            let a = GaussianTuple::new(vec![
                SpdMatrix::from_diagonal(&[a1]).unwrap(),
                SpdMatrix::from_diagonal(&[a2]).unwrap(),
            ]);
            assert!(log_bl_objective(&lw, &a).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn lieb_objective_rejects_misshaped_tuple() {
        let lw = loomis_whitney();
        let a = GaussianTuple::new(vec![SpdMatrix::identity(2), SpdMatrix::identity(1)]);
        assert!(matches!(
            log_bl_objective(&lw, &a),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn singular_aggregate_is_reported() {
        // p_2 = 0 leaves sum_j p_j B_j^T A_j B_j = a1 e1 e1^T, singular.
        let d = BlDatum::from_parts(
            2,
            vec![DMatrix::identity(2, 2), row(&[1.0, 0.0])],
            &[(1, 1), (0, 1)],
        )
        .unwrap();
        let mut a = GaussianTuple::identity_for(&d);
        assert!(log_bl_objective(&d, &a).is_ok());
        let d2 = collapse();
        a = GaussianTuple::identity_for(&d2);
        assert_eq!(
            log_bl_objective(&d2, &a).unwrap_err(),
            Error::SingularAggregate
        );
    }

    #[test]
    fn f_objective_examples() {
        let lw = loomis_whitney();
        for (x1, x2) in [(1.0, 1.0), (0.2, 9.0)] {
            let x = SpdMatrix::from_diagonal(&[x1, x2]).unwrap();
            assert!(f_objective(&lw, &x).unwrap().abs() < 1e-14);
        }
        let x = SpdMatrix::new(m2(2.0, 1.0, 1.0, 2.0)).unwrap();
        assert_relative_eq!(f_objective(&lw, &x).unwrap(), 0.75f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(0.75f64.ln(), -0.28768, epsilon = 1e-5);

        let h = hoelder();
        let y = SpdMatrix::new(m2(5.0, -1.0, -1.0, 0.4)).unwrap();
        assert!(f_objective(&h, &y).unwrap().abs() < 1e-14);
        assert!(f_objective(&h, &SpdMatrix::identity(3)).is_err());
    }

    #[test]
    fn gradient_examples() {
        let lw = loomis_whitney();
        let g = f_euclidean_gradient(&lw, &SpdMatrix::identity(2)).unwrap();
        assert!(g.as_matrix().norm() < 1e-15);

        let x = SpdMatrix::new(m2(2.0, 1.0, 1.0, 2.0)).unwrap();
        let g = f_euclidean_gradient(&lw, &x).unwrap();
        assert_relative_eq!(
            g.into_inner(),
            m2(1.0 / 6.0, -1.0 / 3.0, -1.0 / 3.0, 1.0 / 6.0),
            epsilon = 1e-14
        );

        let h = hoelder();
        let y = SpdMatrix::new(m2(5.0, -1.0, -1.0, 0.4)).unwrap();
        assert!(f_euclidean_gradient(&h, &y).unwrap().as_matrix().norm() < 1e-13);
    }

    #[test]
    fn f_is_scale_invariant_under_scaling_condition() {
        let d = young_triple();
        let x = SpdMatrix::new(m2(1.3, 0.4, 0.4, 0.8)).unwrap();
        let base = f_objective(&d, &x).unwrap();
        for lambda in [1e-3, 0.5, 7.0, 1e4] {
            let scaled = f_objective(&d, &x.scale(lambda).unwrap()).unwrap();
            assert_relative_eq!(scaled, base, epsilon = 1e-12);
        }
    }
}
