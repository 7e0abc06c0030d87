//! Randomized checks of the inequalities and identities behind the solvers.
//!
//! Every check computes a per-sample slack that is non-negative when the
//! property holds, scaled by `1 + ` the Frobenius norms (or absolute values)
//! of the operands. A sample is a violation when its slack is below
//! `-tolerance`. Samples are independent and run on the rayon pool; each
//! sample draws from its own stream derived from `(seed, index)`, so reports
//! do not depend on scheduling.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datum::{f_euclidean_gradient, f_objective, log_bl_objective, BlDatum, GaussianTuple};
use crate::error::{Error, Result};
use crate::linalg::{
    block2x2, min_eigenvalue, numerical_rank, orthonormalize, singular_values, symmetrize,
};
use crate::opscale::KrausSet;
use crate::spd::{geodesic, geometric_mean, log_det, log_det_raw, SpdMatrix, TangentMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    #[serde(rename = "property")]
    pub property_name: String,
    pub samples: usize,
    pub violations: usize,
    /// Most negative scaled slack observed (0 for an empty run).
    pub worst_margin: f64,
    pub seed: u64,
    pub tolerance: f64,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Seeded source of SPD matrices `Q diag(lambda) Q^T` with Haar-like
/// orthogonal `Q` and log-uniform spectrum inside `[cap^-1/2, cap^1/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdSampler {
    pub dim: usize,
    pub condition_cap: f64,
    pub seed: u64,
}

impl SpdSampler {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            condition_cap: 1e4,
            seed,
        }
    }

    pub fn with_condition_cap(mut self, cap: f64) -> Self {
        self.condition_cap = cap;
        self
    }

    pub fn with_dim(&self, dim: usize) -> Self {
        Self {
            dim,
            ..self.clone()
        }
    }

    /// Independent stream for sample `index`.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    pub fn draw(&self, rng: &mut impl Rng) -> SpdMatrix {
        random_spd(rng, self.dim, self.condition_cap)
    }
}

pub(crate) fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub(crate) fn random_orthogonal(rng: &mut impl Rng, dim: usize) -> DMatrix<f64> {
    orthonormalize(&gaussian_matrix(rng, dim, dim))
}

pub fn random_spd(rng: &mut impl Rng, dim: usize, condition_cap: f64) -> SpdMatrix {
    let half = 0.5 * condition_cap.max(1.0).ln();
    let q = random_orthogonal(rng, dim);
    let lambdas: Vec<f64> = (0..dim)
        .map(|_| rng.gen_range(-half..=half).exp())
        .collect();
    let mut scaled = q.clone();
    for (k, &l) in lambdas.iter().enumerate() {
        scaled.column_mut(k).scale_mut(l);
    }
    SpdMatrix::from_symmetric_part(scaled * q.transpose()).expect("spectrum is positive")
}

pub(crate) fn random_symmetric(rng: &mut impl Rng, dim: usize) -> TangentMatrix {
    TangentMatrix::from_symmetric_part(gaussian_matrix(rng, dim, dim))
}

/// Largest singular-value ratio accepted for generated maps. Square maps
/// contribute exactly cancelling terms to the gradient, and their rounding
/// error grows with the square of this ratio.
pub const MAP_CONDITION_CAP: f64 = 100.0;

fn well_conditioned_map(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    loop {
        let b = gaussian_matrix(rng, rows, cols);
        let sv = singular_values(&b);
        let (hi, lo) = (sv[0], sv[sv.len() - 1]);
        if lo > 0.0 && hi / lo <= MAP_CONDITION_CAP {
            return b;
        }
    }
}

/// Random feasible datum built from a coordinate cover.
///
/// Every coordinate of `R^n` is assigned to exactly `r` of `m` blocks and
/// `p_j = 1/r`. The projections onto those blocks satisfy the dimension
/// condition for every subspace (each coordinate direction is seen `r`
/// times), and the change of variables `B_j = R_j P_{S_j} M` with invertible
/// `M` and `R_j` preserves finiteness. Factors are capped at condition 10 so
/// square maps stay within [`MAP_CONDITION_CAP`].
pub fn random_feasible_datum(rng: &mut impl Rng, n: usize) -> BlDatum {
    let factor_cap = MAP_CONDITION_CAP.sqrt();
    loop {
        let m = rng.gen_range(2..=4);
        let r = rng.gen_range(1..=2.min(m));
        let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); m];
        for i in 0..n {
            for j in rand::seq::index::sample(rng, m, r) {
                blocks[j].push(i);
            }
        }
        blocks.retain(|b| !b.is_empty());
        if blocks.len() < 2 {
            continue;
        }
        let mix = random_spd(rng, n, factor_cap).into_inner() * random_orthogonal(rng, n);
        let maps: Vec<DMatrix<f64>> = blocks
            .iter()
            .map(|b| {
                let rows = DMatrix::from_fn(b.len(), n, |k, i| if b[k] == i { 1.0 } else { 0.0 });
                let left = random_spd(rng, b.len(), factor_cap).into_inner()
                    * random_orthogonal(rng, b.len());
                left * rows * &mix
            })
            .collect();
        let exps = vec![(1, r as i64); maps.len()];
        if let Ok(d) = BlDatum::from_parts(n, maps, &exps) {
            return d;
        }
    }
}

/// `X -> B X B^T` for a full-row-rank `B`; strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveMap {
    b: DMatrix<f64>,
}

impl PositiveMap {
    pub fn new(b: DMatrix<f64>) -> Result<Self> {
        if b.nrows() == 0 || numerical_rank(&b) < b.nrows() {
            return Err(Error::RankDeficient {
                map: 0,
                rank: numerical_rank(&b),
                rows: b.nrows(),
            });
        }
        Ok(Self { b })
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.b * x * self.b.transpose()))
    }
}

fn aggregate_report(name: &str, seed: u64, tolerance: f64, slacks: Vec<f64>) -> PropertyReport {
    let violations = slacks.iter().filter(|&&s| !(s >= -tolerance)).count();
    let worst_margin = slacks
        .iter()
        .copied()
        .map(|s| if s.is_nan() { f64::NEG_INFINITY } else { s })
        .fold(None, |acc: Option<f64>, s| {
            Some(acc.map_or(s, |a| a.min(s)))
        })
        .unwrap_or(0.0);
    PropertyReport {
        property_name: name.to_string(),
        samples: slacks.len(),
        violations,
        worst_margin,
        seed,
        tolerance,
    }
}

fn run_samples(samples: usize, slack: impl Fn(u64) -> Result<f64> + Sync) -> Vec<f64> {
    (0..samples as u64)
        .into_par_iter()
        .map(|i| slack(i).unwrap_or(f64::NEG_INFINITY))
        .collect()
}

fn scaled_min_eig(gap: &DMatrix<f64>, scale: f64) -> f64 {
    min_eigenvalue(gap) / (1.0 + scale)
}

/// `Phi(P # Q) <= Phi(P) # Phi(Q)` for a strictly positive `Phi`.
pub fn check_ando(
    sampler: &SpdSampler,
    map: &PositiveMap,
    samples: usize,
    tolerance: f64,
) -> PropertyReport {
    let sampler = sampler.with_dim(map.input_dim());
    let slacks = run_samples(samples, |i| {
        let mut rng = sampler.stream(i);
        let (p, q) = (sampler.draw(&mut rng), sampler.draw(&mut rng));
        let lhs = map.apply(geometric_mean(&p, &q)?.as_matrix());
        let fp = SpdMatrix::from_symmetric_part(map.apply(p.as_matrix()))?;
        let fq = SpdMatrix::from_symmetric_part(map.apply(q.as_matrix()))?;
        let rhs = geometric_mean(&fp, &fq)?.into_inner();
        Ok(scaled_min_eig(&(&rhs - &lhs), lhs.norm() + rhs.norm()))
    });
    aggregate_report("ando", sampler.seed, tolerance, slacks)
}

/// `sum_j Phi_j(P_j # Q_j) <= (sum_j Phi_j(P_j)) # (sum_j Phi_j(Q_j))` with
/// `Phi_j(A) = K_j A K_j^T`. The sums must be positive definite.
pub fn check_joint_gm(
    samplers: &[SpdSampler],
    maps: &[DMatrix<f64>],
    samples: usize,
    tolerance: f64,
) -> Result<PropertyReport> {
    if samplers.len() != maps.len() || maps.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: maps.len(),
            found: samplers.len(),
        });
    }
    let n = maps[0].nrows();
    let samplers: Vec<SpdSampler> = samplers
        .iter()
        .zip(maps)
        .map(|(s, k)| s.with_dim(k.ncols()))
        .collect();
    let apply = |k: &DMatrix<f64>, a: &DMatrix<f64>| symmetrize(&(k * a * k.transpose()));

    let slacks = run_samples(samples, |i| {
        let mut sum_p = DMatrix::zeros(n, n);
        let mut sum_q = DMatrix::zeros(n, n);
        let mut sum_g = DMatrix::zeros(n, n);
        for (s, k) in samplers.iter().zip(maps) {
            let mut rng = s.stream(i);
            let (p, q) = (s.draw(&mut rng), s.draw(&mut rng));
            let g = geometric_mean(&p, &q)?;
            sum_p += apply(k, p.as_matrix());
            sum_q += apply(k, q.as_matrix());
            sum_g += apply(k, g.as_matrix());
        }
        let rhs = geometric_mean(
            &SpdMatrix::from_symmetric_part(sum_p)?,
            &SpdMatrix::from_symmetric_part(sum_q)?,
        )?
        .into_inner();
        Ok(scaled_min_eig(&(&rhs - &sum_g), rhs.norm() + sum_g.norm()))
    });
    Ok(aggregate_report(
        "joint_geometric_mean",
        samplers[0].seed,
        tolerance,
        slacks,
    ))
}

/// `log det(X #_t Y) = (1 - t) log det X + t log det Y`, checked two-sidedly.
pub fn check_logdet_linearity(
    sampler: &SpdSampler,
    samples: usize,
    tolerance: f64,
) -> PropertyReport {
    let slacks = run_samples(samples, |i| {
        let mut rng = sampler.stream(i);
        let (x, y) = (sampler.draw(&mut rng), sampler.draw(&mut rng));
        let t: f64 = rng.gen_range(0.0..=1.0);
        let (lx, ly) = (log_det(&x)?, log_det(&y)?);
        let mid = log_det(&geodesic(&x, &y, t)?)?;
        let dev = (mid - (1.0 - t) * lx - t * ly).abs();
        Ok(-dev / (1.0 + lx.abs() + ly.abs()))
    });
    aggregate_report("logdet_geodesic_linearity", sampler.seed, tolerance, slacks)
}

/// Midpoint log-concavity of Lieb's ratio over tuples, and midpoint
/// concavity of `F`; returns `[lieb, f]`.
pub fn check_bl_concavity(
    d: &BlDatum,
    sampler: &SpdSampler,
    samples: usize,
    tolerance: f64,
) -> [PropertyReport; 2] {
    let block_samplers: Vec<SpdSampler> =
        (0..d.m()).map(|j| sampler.with_dim(d.codim(j))).collect();
    let lieb = run_samples(samples, |i| {
        let mut p = Vec::with_capacity(d.m());
        let mut q = Vec::with_capacity(d.m());
        let mut g = Vec::with_capacity(d.m());
        for s in &block_samplers {
            let mut rng = s.stream(i);
            let (pj, qj) = (s.draw(&mut rng), s.draw(&mut rng));
            g.push(geometric_mean(&pj, &qj)?);
            p.push(pj);
            q.push(qj);
        }
        let lp = log_bl_objective(d, &GaussianTuple::new(p))?;
        let lq = log_bl_objective(d, &GaussianTuple::new(q))?;
        let lg = log_bl_objective(d, &GaussianTuple::new(g))?;
        Ok((lg - 0.5 * lp - 0.5 * lq) / (1.0 + lp.abs() + lq.abs()))
    });

    let xs = sampler.with_dim(d.n());
    let f = run_samples(samples, |i| {
        let mut rng = xs.stream(i);
        let (x, y) = (xs.draw(&mut rng), xs.draw(&mut rng));
        let (fx, fy) = (f_objective(d, &x)?, f_objective(d, &y)?);
        let fm = f_objective(d, &geometric_mean(&x, &y)?)?;
        Ok((fm - 0.5 * fx - 0.5 * fy) / (1.0 + fx.abs() + fy.abs()))
    });

    [
        aggregate_report("lieb_midpoint_log_concavity", sampler.seed, tolerance, lieb),
        aggregate_report("f_midpoint_concavity", sampler.seed, tolerance, f),
    ]
}

/// Midpoint convexity of `h(X) = log det T(X)`.
pub fn check_capacity_convexity(
    k: &KrausSet,
    sampler: &SpdSampler,
    samples: usize,
    tolerance: f64,
) -> PropertyReport {
    let sampler = sampler.with_dim(k.input_dim);
    let h = |x: &SpdMatrix| -> Result<f64> { log_det_raw(&k.apply(x.as_matrix())?) };
    let slacks = run_samples(samples, |i| {
        let mut rng = sampler.stream(i);
        let (x, y) = (sampler.draw(&mut rng), sampler.draw(&mut rng));
        let (hx, hy) = (h(&x)?, h(&y)?);
        let hm = h(&geometric_mean(&x, &y)?)?;
        Ok((0.5 * hx + 0.5 * hy - hm) / (1.0 + hx.abs() + hy.abs()))
    });
    aggregate_report(
        "capacity_midpoint_convexity",
        sampler.seed,
        tolerance,
        slacks,
    )
}

/// `[[P, P#Q], [P#Q, Q]]` is PSD, and stays PSD after applying `Phi`
/// blockwise; returns `[block, transfer]`.
pub fn check_maximal_characterization(
    sampler: &SpdSampler,
    map: &PositiveMap,
    samples: usize,
    tolerance: f64,
) -> [PropertyReport; 2] {
    let sampler = sampler.with_dim(map.input_dim());
    let pairs = run_samples(samples * 2, |idx| {
        let mut rng = sampler.stream(idx / 2);
        let (p, q) = (sampler.draw(&mut rng), sampler.draw(&mut rng));
        let g = geometric_mean(&p, &q)?.into_inner();
        let block = if idx % 2 == 0 {
            block2x2(p.as_matrix(), &g, q.as_matrix())
        } else {
            block2x2(
                &map.apply(p.as_matrix()),
                &map.apply(&g),
                &map.apply(q.as_matrix()),
            )
        };
        Ok(scaled_min_eig(&block, block.norm()))
    });
    let (block, transfer): (Vec<f64>, Vec<f64>) = pairs.chunks(2).map(|c| (c[0], c[1])).unzip();
    [
        aggregate_report("maximal_characterization", sampler.seed, tolerance, block),
        aggregate_report(
            "positive_map_block_transfer",
            sampler.seed,
            tolerance,
            transfer,
        ),
    ]
}

/// Where gradient-check data comes from.
#[derive(Debug, Clone)]
pub enum GradientData<'a> {
    Fixed(&'a BlDatum),
    /// A fresh random feasible datum per sample with `n` in `2..=max_n`.
    Random {
        max_n: usize,
    },
}

/// Condition cap for the base point of finite differences; the central
/// difference truncation error grows with a power of `cond(X)`.
pub const FD_CONDITION_CAP: f64 = 10.0;

/// Fourth-order central differences of `t -> F(X + tQ)` at
/// `h = 5e-4 ||X||_F / ||Q||_F` against `Tr(G Q)`.
///
/// The error is normalized by `max(||G||_F ||Q||_F, 1e-3 ||X^-1||_F ||Q||_F)`:
/// the second term is the size of the individual terms of `G`, below which
/// cancellation makes a relative comparison meaningless (e.g. `G = 0`).
pub fn check_gradient_fd(
    data: GradientData<'_>,
    seed: u64,
    samples: usize,
    tolerance: f64,
) -> PropertyReport {
    check_gradient_fd_with(data, seed, samples, tolerance, f_euclidean_gradient)
}

/// [`check_gradient_fd`] with an injectable gradient, so a broken gradient
/// can be shown to be caught.
pub fn check_gradient_fd_with(
    data: GradientData<'_>,
    seed: u64,
    samples: usize,
    tolerance: f64,
    gradient: impl Fn(&BlDatum, &SpdMatrix) -> Result<TangentMatrix> + Sync,
) -> PropertyReport {
    let base = SpdSampler::new(0, seed).with_condition_cap(FD_CONDITION_CAP);
    let slacks = run_samples(samples, |i| {
        let mut rng = base.stream(i);
        let owned;
        let d = match &data {
            GradientData::Fixed(d) => *d,
            GradientData::Random { max_n } => {
                let n = rng.gen_range(2..=(*max_n).max(2));
                owned = random_feasible_datum(&mut rng, n);
                &owned
            }
        };
        let x = random_spd(&mut rng, d.n(), FD_CONDITION_CAP);
        let q = random_symmetric(&mut rng, d.n());
        let h = 5e-4 * x.as_matrix().norm() / q.as_matrix().norm();
        let f_at = |t: f64| -> Result<f64> {
            f_objective(
                d,
                &SpdMatrix::from_symmetric_part(x.as_matrix() + q.as_matrix() * t)?,
            )
        };
        let fd = (8.0 * (f_at(h)? - f_at(-h)?) - (f_at(2.0 * h)? - f_at(-2.0 * h)?)) / (12.0 * h);
        let g = gradient(d, &x)?;
        let analytic = (g.as_matrix().component_mul(q.as_matrix())).sum();
        let qn = q.as_matrix().norm();
        let scale = (g.as_matrix().norm() * qn).max(1e-3 * x.inverse().as_matrix().norm() * qn);
        Ok(-(fd - analytic).abs() / scale)
    });
    aggregate_report("gradient_finite_difference", seed, tolerance, slacks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub condition_cap: f64,
    pub gradient_tolerance: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 42,
            tolerance: 1e-9,
            condition_cap: 1e4,
            gradient_tolerance: 1e-6,
        }
    }
}

impl SuiteConfig {
    /// Badly conditioned samples at a looser tolerance.
    pub fn stress() -> Self {
        Self {
            condition_cap: 1e8,
            tolerance: 1e-6,
            ..Self::default()
        }
    }
}

/// Runs every property. Datum-bound checks (joint mean with the datum's maps,
/// Lieb/F concavity, capacity convexity) run only when a datum is given, and
/// capacity convexity only when its operator is supplied.
pub fn run_suite(
    d: Option<&BlDatum>,
    kraus: Option<&KrausSet>,
    cfg: &SuiteConfig,
) -> Vec<PropertyReport> {
    let sampler = SpdSampler::new(3, cfg.seed).with_condition_cap(cfg.condition_cap);
    let mut setup = ChaCha8Rng::seed_from_u64(cfg.seed);
    let map = loop {
        if let Ok(m) = PositiveMap::new(gaussian_matrix(&mut setup, 2, 3)) {
            break m;
        }
    };

    let mut reports = vec![
        check_ando(&sampler, &map, cfg.samples, cfg.tolerance),
        check_logdet_linearity(&sampler, cfg.samples, cfg.tolerance),
    ];
    reports.extend(check_maximal_characterization(
        &sampler,
        &map,
        cfg.samples,
        cfg.tolerance,
    ));

    let (joint_maps, joint_samplers): (Vec<DMatrix<f64>>, Vec<SpdSampler>) = match d {
        Some(d) => (0..d.m())
            .filter(|&j| d.numerators()[j] > 0)
            .map(|j| {
                let k = d.map(j).transpose() * d.exponent(j).sqrt();
                (
                    k,
                    SpdSampler::new(d.codim(j), cfg.seed.wrapping_add(j as u64 + 1))
                        .with_condition_cap(cfg.condition_cap),
                )
            })
            .unzip(),
        None => {
            // Columns of one well-conditioned matrix, so the sums stay well
            // conditioned too.
            let w = well_conditioned_map(&mut setup, 3, 3);
            let maps = vec![w.columns(0, 2).into_owned(), w.columns(2, 1).into_owned()];
            let samplers = maps
                .iter()
                .enumerate()
                .map(|(j, k)| {
                    SpdSampler::new(k.ncols(), cfg.seed.wrapping_add(j as u64 + 1))
                        .with_condition_cap(cfg.condition_cap)
                })
                .collect();
            (maps, samplers)
        }
    };
    if let Ok(r) = check_joint_gm(&joint_samplers, &joint_maps, cfg.samples, cfg.tolerance) {
        reports.push(r);
    }

    if let Some(d) = d {
        reports.extend(check_bl_concavity(d, &sampler, cfg.samples, cfg.tolerance));
        if let Some(k) = kraus {
            reports.push(check_capacity_convexity(
                k,
                &sampler,
                cfg.samples,
                cfg.tolerance,
            ));
        }
    }
    let gradient_data = match d {
        Some(d) => GradientData::Fixed(d),
        None => GradientData::Random { max_n: 4 },
    };
    reports.push(check_gradient_fd(
        gradient_data,
        cfg.seed,
        cfg.samples,
        cfg.gradient_tolerance,
    ));
    reports
}
