//! Direct solvers for `sup_X F(X)`.
//!
//! Both methods work on det-normalized iterates; `F` is invariant along the
//! scalar ray once `sum_j p_j n_j = n`, so the normalization only removes a
//! flat direction.
//!
//! * Fixed point: `M_{k+1} = (1 - a) M_k + a sum_j p_j B_j^T (B_j M_k^{-1} B_j^T)^{-1} B_j`
//!   with `X_k = M_k^{-1}`. The undamped map never decreases `F`; the
//!   damping weight `a` is halved whenever a step would decrease `F` or leave
//!   the cone.
//! * Geodesic ascent: `X_{k+1} = X^{1/2} exp(eta X^{1/2} G X^{1/2}) X^{1/2}`,
//!   the exponential map applied to the Riemannian gradient `X G X`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datum::{f_euclidean_gradient, f_objective, BlDatum, GaussianTuple};
use crate::error::Error;
use crate::linalg::{spectral_apply, sym_eigen, symmetrize};
use crate::spd::{spd_inverse_raw, SpdMatrix};

/// Damping weights below this are treated as a stalled iteration.
const MIN_DAMPING: f64 = 1e-12;
/// Allowed decrease of `F` for an accepted step (round-off floor).
const ASCENT_SLACK: f64 = 1e-12;
/// Armijo acceptance slack on top of the sufficient-increase term.
const ARMIJO_SLACK: f64 = 1e-13;
const MIN_STEP: f64 = 1e-20;
/// Armijo trial step; the log-det terms have unit curvature in this metric.
const INITIAL_STEP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FixedPoint,
    Geodesic,
    Capacity,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::FixedPoint => "fixed-point",
            Method::Geodesic => "geodesic",
            Method::Capacity => "capacity",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed-point" => Ok(Method::FixedPoint),
            "geodesic" => Ok(Method::Geodesic),
            "capacity" => Ok(Method::Capacity),
            other => Err(format!(
                "unknown method {other:?} (expected fixed-point, geodesic or capacity)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    FixedStep { eta: f64 },
    GeodesicArmijo { beta: f64, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceThresholds {
    /// Largest tolerated growth of `F` above its starting value.
    pub value_drift: f64,
    /// Largest tolerated condition number of an iterate.
    pub iterate_norm: f64,
}

impl Default for DivergenceThresholds {
    fn default() -> Self {
        Self {
            value_drift: 1e3,
            iterate_norm: 1e14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub step_rule: StepRule,
    pub divergence: DivergenceThresholds,
    pub seed: u64,
    /// Starting point; the identity when absent.
    pub x0: Option<SpdMatrix>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            damping: 1.0,
            step_rule: StepRule::GeodesicArmijo {
                beta: 0.5,
                sigma: 1e-4,
            },
            divergence: DivergenceThresholds::default(),
            seed: 0,
            x0: None,
        }
    }
}

impl SolverConfig {
    /// Defaults for the alternating scaling loop, which stops at a
    /// doubly-stochastic residual of `1e-8`.
    pub fn capacity_default() -> Self {
        Self {
            tol: 1e-8,
            ..Self::default()
        }
    }

    pub fn with_x0(mut self, x0: SpdMatrix) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        match self.step_rule {
            StepRule::FixedStep { eta } if !(eta > 0.0) => {
                return Err(Error::InvalidConfig(format!("step size must be positive, got {eta}")))
            }
            StepRule::GeodesicArmijo { beta, sigma } if !(beta > 0.0 && beta < 1.0 && sigma > 0.0 && sigma < 1.0) => {
                return Err(Error::InvalidConfig(format!(
                    "Armijo parameters need 0 < beta < 1 and 0 < sigma < 1, got beta={beta} sigma={sigma}"
                )))
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub f_value: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub method: Method,
    /// Estimate of `log BL(B, p) = F(X*) / 2`.
    pub log_bl: f64,
    /// `X*`, normalized to unit determinant.
    pub optimizer_x: SpdMatrix,
    /// `A*_j = (B_j X* B_j^T)^{-1}`.
    pub maximizer_a: GaussianTuple,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("not converged after {} iterations (residual {:.3e})", .0.iterations, .0.residual)]
    NotConverged(Box<SolveResult>),
    #[error("diverged after {} iterations: {evidence}", partial.iterations)]
    Diverged {
        evidence: String,
        partial: Box<SolveResult>,
    },
    #[error(transparent)]
    Numerical(#[from] Error),
}

impl SolveError {
    /// The best iterate reached before the failure, if any.
    pub fn partial(&self) -> Option<&SolveResult> {
        match self {
            SolveError::NotConverged(r) => Some(r),
            SolveError::Diverged { partial, .. } => Some(partial),
            SolveError::Numerical(_) => None,
        }
    }
}

/// `||X^{-1} - sum_j p_j B_j^T (B_j X B_j^T)^{-1} B_j||_F / ||X^{-1}||_F`.
pub fn stationarity_residual(d: &BlDatum, x: &SpdMatrix) -> Result<f64, Error> {
    let inv = spd_inverse_raw(x.as_matrix())?;
    let rhs = d.critical_map(x)?;
    Ok((&inv - rhs).norm() / inv.norm())
}

/// `A_j = (B_j X B_j^T)^{-1}` for each map.
pub fn extract_maximizer(d: &BlDatum, x: &SpdMatrix) -> Result<GaussianTuple, Error> {
    d.check_dim(x)?;
    let blocks = (0..d.m())
        .map(|j| {
            SpdMatrix::from_symmetric_part(d.push_forward(j, x.as_matrix())).map(|b| b.inverse())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GaussianTuple::new(blocks))
}

fn initial_point(d: &BlDatum, cfg: &SolverConfig) -> Result<SpdMatrix, Error> {
    let x0 = match &cfg.x0 {
        Some(x0) => {
            d.check_dim(x0)?;
            x0.clone()
        }
        None => SpdMatrix::identity(d.n()),
    };
    Ok(x0.normalize_det())
}

struct Run<'a> {
    d: &'a BlDatum,
    cfg: &'a SolverConfig,
    method: Method,
    f_start: f64,
    trace: Vec<TracePoint>,
}

impl<'a> Run<'a> {
    fn new(
        d: &'a BlDatum,
        cfg: &'a SolverConfig,
        method: Method,
        x: &SpdMatrix,
    ) -> Result<Self, Error> {
        let f = f_objective(d, x)?;
        let residual = stationarity_residual(d, x)?;
        Ok(Self {
            d,
            cfg,
            method,
            f_start: f,
            trace: vec![TracePoint {
                iteration: 0,
                f_value: f,
                residual,
            }],
        })
    }

    fn last(&self) -> TracePoint {
        *self.trace.last().expect("trace starts non-empty")
    }

    fn record(&mut self, x: &SpdMatrix) -> Result<TracePoint, Error> {
        let point = TracePoint {
            iteration: self.trace.len(),
            f_value: f_objective(self.d, x)?,
            residual: stationarity_residual(self.d, x)?,
        };
        self.trace.push(point);
        Ok(point)
    }

    fn divergence(&self, x: &SpdMatrix, f: f64) -> Option<String> {
        let th = &self.cfg.divergence;
        if !f.is_finite() {
            return Some("objective became non-finite".into());
        }
        if f - self.f_start > th.value_drift {
            return Some(format!(
                "objective grew by {:.3e} (> {:.3e}); the constant appears infinite or the datum is not simple",
                f - self.f_start,
                th.value_drift
            ));
        }
        let cond = x.condition_number();
        if !(cond <= th.iterate_norm) {
            return Some(format!(
                "iterate condition number {cond:.3e} exceeds {:.3e}; the maximizer escapes to the boundary",
                th.iterate_norm
            ));
        }
        None
    }

    fn finish(self, x: SpdMatrix, converged: bool, diverged: bool) -> Result<SolveResult, Error> {
        let last = self.last();
        let maximizer_a = extract_maximizer(self.d, &x)?;
        Ok(SolveResult {
            method: self.method,
            log_bl: 0.5 * last.f_value,
            optimizer_x: x,
            maximizer_a,
            residual: last.residual,
            iterations: self.trace.len() - 1,
            converged,
            diverged,
            trace: self.trace,
        })
    }

    fn not_converged(self, x: SpdMatrix) -> SolveError {
        match self.finish(x, false, false) {
            Ok(r) => SolveError::NotConverged(Box::new(r)),
            Err(e) => e.into(),
        }
    }

    fn diverged(self, x: SpdMatrix, evidence: String) -> SolveError {
        match self.finish(x, false, true) {
            Ok(r) => SolveError::Diverged {
                evidence,
                partial: Box::new(r),
            },
            Err(e) => e.into(),
        }
    }
}

/// Damped fixed-point iteration on the critical-point equation
/// `X^{-1} = sum_j p_j B_j^T (B_j X B_j^T)^{-1} B_j`.
pub fn solve_fixed_point(d: &BlDatum, cfg: &SolverConfig) -> Result<SolveResult, SolveError> {
    cfg.validate()?;
    let mut x = initial_point(d, cfg)?;
    let mut run = Run::new(d, cfg, Method::FixedPoint, &x)?;
    let mut damping = cfg.damping;

    if run.last().residual <= cfg.tol {
        return Ok(run.finish(x, true, false)?);
    }

    for _ in 0..cfg.max_iter {
        let f = run.last().f_value;
        let m = spd_inverse_raw(x.as_matrix())?;
        let rhs = d.critical_map(&x)?;

        let next = loop {
            let candidate = symmetrize(&(&m * (1.0 - damping) + &rhs * damping));
            let trial = SpdMatrix::from_symmetric_part(candidate)
                .map(|mc| mc.inverse().normalize_det())
                .and_then(|xc| f_objective(d, &xc).map(|fc| (xc, fc)));
            match trial {
                Ok((xc, fc)) if fc >= f - ASCENT_SLACK => break Some(xc),
                _ => {
                    damping *= 0.5;
                    if damping < MIN_DAMPING {
                        break None;
                    }
                }
            }
        };
        let Some(next) = next else {
            return Err(run.not_converged(x));
        };
        x = next;

        let point = run.record(&x)?;
        if let Some(evidence) = run.divergence(&x, point.f_value) {
            return Err(run.diverged(x, evidence));
        }
        if point.residual <= cfg.tol {
            return Ok(run.finish(x, true, false)?);
        }
    }
    Err(run.not_converged(x))
}

/// Riemannian gradient ascent along geodesics of the affine-invariant metric.
pub fn solve_geodesic_ascent(d: &BlDatum, cfg: &SolverConfig) -> Result<SolveResult, SolveError> {
    cfg.validate()?;
    let mut x = initial_point(d, cfg)?;
    let mut run = Run::new(d, cfg, Method::Geodesic, &x)?;

    for iter in 0..=cfg.max_iter {
        let TracePoint {
            f_value: f,
            residual,
            ..
        } = run.last();
        let grad = f_euclidean_gradient(d, &x)?;
        let (sqrt, _) = x.sqrt_and_inv_sqrt()?;
        // S = X^{1/2} G X^{1/2}; ||S||_F is the Riemannian gradient norm.
        let s = symmetrize(&(&sqrt * grad.as_matrix() * &sqrt));
        let grad_norm_sq = s.norm_squared();

        if residual <= cfg.tol && grad_norm_sq.sqrt() <= cfg.tol * (1.0 + f.abs()) {
            return Ok(run.finish(x, true, false)?);
        }
        if iter == cfg.max_iter {
            break;
        }

        let eig = sym_eigen(&s);
        let step = |eta: f64| -> Result<(SpdMatrix, f64), Error> {
            let e = spectral_apply(&eig, |l| (eta * l).exp());
            let xn = SpdMatrix::from_symmetric_part(&sqrt * e * &sqrt)?.normalize_det();
            let fn_ = f_objective(d, &xn)?;
            Ok((xn, fn_))
        };

        let next = match cfg.step_rule {
            StepRule::FixedStep { eta } => step(eta).ok().map(|(xn, _)| xn),
            StepRule::GeodesicArmijo { beta, sigma } => {
                let mut eta = INITIAL_STEP;
                loop {
                    match step(eta) {
                        Ok((xn, fn_)) if fn_ >= f + sigma * eta * grad_norm_sq - ARMIJO_SLACK => {
                            break Some(xn)
                        }
                        _ => {
                            eta *= beta;
                            if eta < MIN_STEP {
                                break None;
                            }
                        }
                    }
                }
            }
        };
        let Some(next) = next else {
            return Err(run.not_converged(x));
        };
        x = next;

        let point = run.record(&x)?;
        if let Some(evidence) = run.divergence(&x, point.f_value) {
            return Err(run.diverged(x, evidence));
        }
    }
    Err(run.not_converged(x))
}

/// Dispatches to the direct solvers; capacity lives in [`crate::opscale`].
pub fn solve(d: &BlDatum, method: Method, cfg: &SolverConfig) -> Result<SolveResult, SolveError> {
    match method {
        Method::FixedPoint => solve_fixed_point(d, cfg),
        Method::Geodesic => solve_geodesic_ascent(d, cfg),
        Method::Capacity => {
            Err(Error::InvalidConfig("capacity is solved through opscale::capacity".into()).into())
        }
    }
}

/// Relative Frobenius distance, used to compare optimizers.
pub fn relative_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datum::catalog::*;
    use crate::datum::log_bl_objective;
    use approx::assert_relative_eq;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> SpdMatrix {
        SpdMatrix::from_row_slice(2, &[a, b, c, d]).unwrap()
    }

    #[test]
    fn residual_examples() {
        let lw = loomis_whitney();
        assert!(stationarity_residual(&lw, &m2(2.0, 0.0, 0.0, 2.0)).unwrap() < 1e-15);
        let h = hoelder();
        assert!(stationarity_residual(&h, &m2(3.0, 1.0, 1.0, 0.7)).unwrap() < 1e-14);
        // Numerator sqrt(2/36 + 2/9), denominator sqrt(10)/3.
        let expected = (2.0f64 / 36.0 + 2.0 / 9.0).sqrt() / (10f64.sqrt() / 3.0);
        let r = stationarity_residual(&lw, &m2(2.0, 1.0, 1.0, 2.0)).unwrap();
        assert_relative_eq!(r, expected, epsilon = 1e-14);
        assert_relative_eq!(r, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn extract_examples() {
        let lw = loomis_whitney();
        let a = extract_maximizer(&lw, &m2(2.0, 0.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(a.blocks[0].as_matrix()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(a.blocks[1].as_matrix()[(0, 0)], 0.5, epsilon = 1e-15);

        let h = hoelder();
        let a = extract_maximizer(&h, &SpdMatrix::identity(2)).unwrap();
        for b in &a.blocks {
            assert_relative_eq!(
                b.as_matrix(),
                SpdMatrix::identity(2).as_matrix(),
                epsilon = 1e-15
            );
        }

        let d = young_triple();
        let x = m2(1.5, 0.2, 0.2, 0.9);
        let a1 = extract_maximizer(&d, &x).unwrap();
        let a2 = extract_maximizer(&d, &x.scale(4.0).unwrap()).unwrap();
        for (b1, b2) in a1.blocks.iter().zip(&a2.blocks) {
            assert_relative_eq!(
                b2.as_matrix() * 4.0,
                b1.as_matrix().clone(),
                epsilon = 1e-14
            );
        }
        assert_relative_eq!(
            log_bl_objective(&d, &a1).unwrap(),
            log_bl_objective(&d, &a2).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn fixed_point_loomis_whitney_first_step_is_exact() {
        let cfg = SolverConfig::default().with_x0(m2(2.0, 1.0, 1.0, 2.0));
        let r = solve_fixed_point(&loomis_whitney(), &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.log_bl.abs() < 1e-14);
        assert_relative_eq!(
            r.optimizer_x.as_matrix(),
            SpdMatrix::identity(2).as_matrix(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn fixed_point_hoelder_needs_no_iterations() {
        let r = solve_fixed_point(&hoelder(), &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.log_bl, 0.0);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn geodesic_hoelder_converges_immediately() {
        let cfg =
            SolverConfig::default().with_x0(SpdMatrix::from_diagonal(&[3.0, 1.0 / 3.0]).unwrap());
        let r = solve_geodesic_ascent(&hoelder(), &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert!(r.log_bl.abs() < 1e-15);
    }

    #[test]
    fn geodesic_loomis_whitney_reaches_diagonal() {
        let cfg = SolverConfig::default().with_x0(m2(2.0, 1.0, 1.0, 2.0));
        let r = solve_geodesic_ascent(&loomis_whitney(), &cfg).unwrap();
        assert!(r.converged);
        assert!(r.log_bl.abs() < 1e-8);
        assert!(r.optimizer_x.as_matrix()[(0, 1)].abs() < 1e-6);
    }

    #[test]
    fn traces_are_monotone() {
        let d = young_triple();
        let cfg = SolverConfig::default().with_x0(m2(5.0, -1.0, -1.0, 0.5));
        for r in [
            solve_fixed_point(&d, &cfg).unwrap(),
            solve_geodesic_ascent(&d, &cfg).unwrap(),
        ] {
            assert!(r.converged, "{:?}", r.method);
            for w in r.trace.windows(2) {
                assert!(
                    w[1].f_value >= w[0].f_value - 1e-12,
                    "{:?}: {:?}",
                    r.method,
                    w
                );
            }
        }
    }

    #[test]
    fn collapse_diverges() {
        let d = collapse();
        match solve_fixed_point(&d, &SolverConfig::default()) {
            Err(SolveError::Diverged { partial, .. }) => assert!(partial.diverged),
            other => panic!("expected divergence, got {other:?}"),
        }
        match solve_geodesic_ascent(&d, &SolverConfig::default()) {
            Err(SolveError::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn iteration_cap_yields_not_converged_with_partial() {
        let cfg = SolverConfig {
            max_iter: 2,
            x0: Some(m2(50.0, 3.0, 3.0, 0.5)),
            ..SolverConfig::default()
        };
        match solve_geodesic_ascent(&young_triple(), &cfg) {
            Err(SolveError::NotConverged(r)) => {
                assert!(!r.converged);
                assert_eq!(r.iterations, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            SolverConfig {
                tol: 0.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                max_iter: 0,
                ..SolverConfig::default()
            },
            SolverConfig {
                damping: 0.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                damping: 1.5,
                ..SolverConfig::default()
            },
            SolverConfig {
                step_rule: StepRule::FixedStep { eta: -1.0 },
                ..SolverConfig::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(
                solve_fixed_point(&hoelder(), &cfg),
                Err(SolveError::Numerical(Error::InvalidConfig(_)))
            ));
        }
    }

    #[test]
    fn wrong_x0_dimension_is_rejected() {
        let cfg = SolverConfig::default().with_x0(SpdMatrix::identity(3));
        assert!(matches!(
            solve_fixed_point(&hoelder(), &cfg),
            Err(SolveError::Numerical(Error::DimensionMismatch { .. }))
        ));
    }
}
