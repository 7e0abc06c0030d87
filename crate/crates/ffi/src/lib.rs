//! C ABI over the `blgeo` solvers.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns a [`BlgeoStatus`];
//! on failure [`blgeo_last_error`] describes what went wrong on the calling
//! thread. Panics are caught at the boundary and reported as
//! [`BlgeoStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use blgeo::io::{parse_datum, to_json, CapacityJson, RunStatus, SolveJson};
use blgeo::opscale::{build_scaling_operator, CapacityError, DEFAULT_DIM_CAP};
use blgeo::solvers::solve;
use blgeo::{capacity, BlDatum, Error, SolveError, SolverConfig};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlgeoStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Input text was not valid UTF-8, not valid JSON or not a valid datum.
    InvalidInput = 2,
    /// The datum fails the scaling condition or a map is rank deficient.
    Infeasible = 3,
    /// The iteration budget ran out; a partial result is still returned.
    NotConverged = 4,
    /// The iterates escaped to the boundary; a partial result is still
    /// returned when one exists.
    Diverged = 5,
    /// The operator-scaling reduction exceeds the dimension cap.
    DimensionCapExceeded = 6,
    /// The caller's buffer is too small.
    BufferTooSmall = 7,
    /// The requested quantity is not available for this result.
    Unavailable = 8,
    /// A numerical failure or a caught panic.
    Internal = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlgeoMethod {
    FixedPoint = 0,
    Geodesic = 1,
    Capacity = 2,
}

impl From<BlgeoMethod> for blgeo::Method {
    fn from(m: BlgeoMethod) -> Self {
        match m {
            BlgeoMethod::FixedPoint => blgeo::Method::FixedPoint,
            BlgeoMethod::Geodesic => blgeo::Method::Geodesic,
            BlgeoMethod::Capacity => blgeo::Method::Capacity,
        }
    }
}

/// A validated Brascamp-Lieb datum.
pub struct BlgeoDatum {
    inner: BlDatum,
}

/// The outcome of one solve.
pub struct BlgeoResult {
    log_bl: f64,
    residual: f64,
    iterations: usize,
    converged: bool,
    dim: usize,
    /// Row-major `X*`; absent for capacity.
    optimizer: Option<Vec<f64>>,
    json: String,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    let c = CString::new(text).expect("interior nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: BlgeoStatus, msg: impl Into<String>) -> BlgeoStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> BlgeoStatus) -> BlgeoStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(BlgeoStatus::Internal, format!("panic: {msg}"))
        }
    }
}

fn status_of(e: &Error) -> BlgeoStatus {
    match e {
        Error::ScalingViolation { .. } | Error::RankDeficient { .. } => BlgeoStatus::Infeasible,
        Error::DimensionCapExceeded { .. } => BlgeoStatus::DimensionCapExceeded,
        Error::SingularOperator => BlgeoStatus::Diverged,
        Error::InvalidConfig(_) | Error::InvalidDatum(_) => BlgeoStatus::InvalidInput,
        _ => BlgeoStatus::Internal,
    }
}

/// Parses and validates a datum from JSON text.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn blgeo_datum_from_json(
    json: *const c_char,
    out: *mut *mut BlgeoDatum,
) -> BlgeoStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(BlgeoStatus::NullArgument, "json and out must be non-null");
        }
        *out = ptr::null_mut();
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(e) => {
                return fail(
                    BlgeoStatus::InvalidInput,
                    format!("datum is not UTF-8: {e}"),
                )
            }
        };
        match parse_datum(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(BlgeoDatum { inner }));
                BlgeoStatus::Ok
            }
            Err(blgeo::IoError::Invalid(e)) => fail(status_of(&e), e.to_string()),
            Err(e) => fail(BlgeoStatus::InvalidInput, e.to_string()),
        }
    })
}

/// Releases a datum. Null is ignored.
///
/// # Safety
/// `datum` must come from [`blgeo_datum_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn blgeo_datum_free(datum: *mut BlgeoDatum) {
    if !datum.is_null() {
        drop(Box::from_raw(datum));
    }
}

/// Ambient dimension `n`, or 0 for a null handle.
///
/// # Safety
/// `datum` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blgeo_datum_dim(datum: *const BlgeoDatum) -> usize {
    datum.as_ref().map_or(0, |d| d.inner.n())
}

/// Number of maps `m`, or 0 for a null handle.
///
/// # Safety
/// `datum` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blgeo_datum_map_count(datum: *const BlgeoDatum) -> usize {
    datum.as_ref().map_or(0, |d| d.inner.m())
}

fn solve_inner(
    d: &BlDatum,
    method: BlgeoMethod,
    tol: f64,
    max_iter: usize,
) -> (BlgeoStatus, Option<BlgeoResult>) {
    let mut cfg = match method {
        BlgeoMethod::Capacity => SolverConfig::capacity_default(),
        _ => SolverConfig::default(),
    };
    if tol > 0.0 {
        cfg.tol = tol;
    } else if tol.is_nan() || tol < 0.0 {
        return (
            fail(
                BlgeoStatus::InvalidInput,
                format!("tol must be positive or zero for the default, got {tol}"),
            ),
            None,
        );
    }
    if max_iter > 0 {
        cfg.max_iter = max_iter;
    }

    if method == BlgeoMethod::Capacity {
        let k = match build_scaling_operator(d, DEFAULT_DIM_CAP) {
            Ok(k) => k,
            Err(e) => return (fail(status_of(&e), e.to_string()), None),
        };
        let (status, r) = match capacity(&k, &cfg) {
            Ok(r) => (BlgeoStatus::Ok, r),
            Err(CapacityError::NotConverged(r)) => {
                let msg = CapacityError::NotConverged(r.clone()).to_string();
                (fail(BlgeoStatus::NotConverged, msg), *r)
            }
            Err(CapacityError::Numerical(e)) => return (fail(status_of(&e), e.to_string()), None),
        };
        let result = BlgeoResult {
            log_bl: -0.5 * r.log_cap,
            residual: r.ds_residual,
            iterations: r.iterations,
            converged: r.converged,
            dim: d.n(),
            optimizer: None,
            json: to_json(&CapacityJson::new(&r)),
        };
        return (status, Some(result));
    }

    let (status, r, run_status, evidence) = match solve(d, method.into(), &cfg) {
        Ok(r) => (BlgeoStatus::Ok, r, RunStatus::Converged, None),
        Err(e) => {
            let msg = e.to_string();
            match e {
                SolveError::NotConverged(r) => (
                    fail(BlgeoStatus::NotConverged, msg),
                    *r,
                    RunStatus::NotConverged,
                    None,
                ),
                SolveError::Diverged { evidence, partial } => (
                    fail(BlgeoStatus::Diverged, msg),
                    *partial,
                    RunStatus::Diverged,
                    Some(evidence),
                ),
                SolveError::Numerical(e) => return (fail(status_of(&e), msg), None),
            }
        }
    };
    let x = r.optimizer_x.as_matrix();
    let n = x.nrows();
    let optimizer = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| x[(i, j)])
        .collect();
    let result = BlgeoResult {
        log_bl: r.log_bl,
        residual: r.residual,
        iterations: r.iterations,
        converged: r.converged,
        dim: n,
        optimizer: Some(optimizer),
        json: to_json(&SolveJson::new(&r, run_status, evidence)),
    };
    (status, Some(result))
}

/// Computes `log BL` with the chosen method.
///
/// `tol = 0` and `max_iter = 0` select the method defaults. On
/// [`BlgeoStatus::NotConverged`] and (when an iterate exists)
/// [`BlgeoStatus::Diverged`], `*out` still receives the last iterate;
/// otherwise `*out` is null unless the status is [`BlgeoStatus::Ok`].
///
/// # Safety
/// `datum` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn blgeo_solve(
    datum: *const BlgeoDatum,
    method: BlgeoMethod,
    tol: f64,
    max_iter: usize,
    out: *mut *mut BlgeoResult,
) -> BlgeoStatus {
    guard(|| {
        if datum.is_null() || out.is_null() {
            return fail(BlgeoStatus::NullArgument, "datum and out must be non-null");
        }
        *out = ptr::null_mut();
        let (status, result) = solve_inner(&(*datum).inner, method, tol, max_iter);
        if let Some(r) = result {
            *out = Box::into_raw(Box::new(r));
        }
        status
    })
}

/// Releases a result. Null is ignored.
///
/// # Safety
/// `result` must come from [`blgeo_solve`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn blgeo_result_free(result: *mut BlgeoResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Estimated `log BL`; NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blgeo_result_log_bl(result: *const BlgeoResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.log_bl)
}

/// Stationarity residual, or the doubly-stochastic residual for capacity;
/// NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blgeo_result_residual(result: *const BlgeoResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.residual)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blgeo_result_iterations(result: *const BlgeoResult) -> usize {
    result.as_ref().map_or(0, |r| r.iterations)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blgeo_result_converged(result: *const BlgeoResult) -> bool {
    result.as_ref().is_some_and(|r| r.converged)
}

/// Copies the unit-determinant optimizer `X*` into `buf` in row-major
/// order. `len` must be at least `n * n`.
///
/// # Safety
/// `result` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn blgeo_result_optimizer(
    result: *const BlgeoResult,
    buf: *mut f64,
    len: usize,
) -> BlgeoStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return fail(BlgeoStatus::NullArgument, "result must be non-null");
        };
        let Some(x) = &r.optimizer else {
            return fail(
                BlgeoStatus::Unavailable,
                "capacity results carry no optimizer",
            );
        };
        if buf.is_null() {
            return fail(BlgeoStatus::NullArgument, "buf must be non-null");
        }
        if len < r.dim * r.dim {
            return fail(
                BlgeoStatus::BufferTooSmall,
                format!("buffer holds {len} values, need {}", r.dim * r.dim),
            );
        }
        ptr::copy_nonoverlapping(x.as_ptr(), buf, x.len());
        BlgeoStatus::Ok
    })
}

/// The result as the same JSON document `blgeo solve` prints. Release with
/// [`blgeo_string_free`]. Null for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blgeo_result_to_json(result: *const BlgeoResult) -> *mut c_char {
    match result.as_ref() {
        Some(r) => CString::new(r.json.as_str()).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from [`blgeo_result_to_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn blgeo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn blgeo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn blgeo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
