//! Brascamp-Lieb constants by geodesically convex optimization over
//! positive-definite matrices.
//!
//! Three independent routes compute `log BL(B, p)`:
//! [`solvers::solve_fixed_point`], [`solvers::solve_geodesic_ascent`] and
//! operator capacity through [`opscale`]. [`verify`] checks the convexity
//! inequalities these methods rely on.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod datum;
pub mod error;
pub mod io;
pub mod linalg;
pub mod opscale;
pub mod screen;
pub mod solvers;
pub mod spd;
pub mod verify;

pub use datum::{
    f_euclidean_gradient, f_objective, log_bl_objective, validate_datum, BlDatum, GaussianTuple,
    RawDatum, RawExponent,
};
pub use error::{Error, Result};
pub use io::{load_datum, parse_datum, DatumFile, IoError};
pub use opscale::{
    build_scaling_operator, capacity, log_bl_from_capacity, CapacityResult, KrausSet,
};
pub use screen::{feasibility_screen, FeasibilityReport, ScreenConfig, Verdict};
pub use solvers::{
    extract_maximizer, solve_fixed_point, solve_geodesic_ascent, stationarity_residual, Method,
    SolveError, SolveResult, SolverConfig,
};
pub use spd::{
    geodesic, geometric_mean, loewner_leq, log_det, metric_inner, spd_sqrt, SpdMatrix,
    TangentMatrix,
};
pub use verify::{run_suite, PropertyReport, SpdSampler, SuiteConfig};
