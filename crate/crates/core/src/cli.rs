//! Command dispatch behind the `blgeo` binary.
//!
//! [`run`] is pure: it takes a [`RunManifest`], touches the file system only
//! to read the datum (and an optional starting point), and returns the exit
//! code together with the JSON document to print. Argument parsing and the
//! `BLGEO_DIM_CAP` environment lookup live in `main.rs`.
//!
//! Exit codes:
//!
//! | command    | 0           | 1            | 2                          | 3                           | 4        | 5                |
//! |------------|-------------|--------------|----------------------------|-----------------------------|----------|------------------|
//! | validate   | no witness  | input errors | scaling violation, witness |                             |          |                  |
//! | solve      | converged   | input errors |                            | not converged               | diverged | dimension cap    |
//! | compare    | all agree   | input errors |                            | disagreement or a failure   |          |                  |
//! | properties | no violation| input errors | violations                 |                             |          |                  |
//! | reduce     | written     | input errors |                            |                             |          | dimension cap    |

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::datum::{validate_datum, BlDatum};
use crate::error::Error;
use crate::io::{
    load_datum, parse_datum_file, parse_spd, read_text, to_json, CapacityJson, FeasibilityJson,
    IoError, ReductionJson, RunStatus, SolveJson,
};
use crate::opscale::{build_scaling_operator, capacity, CapacityError, DEFAULT_DIM_CAP};
use crate::screen::{feasibility_screen, FeasibilityReport, ScreenConfig, Verdict};
use crate::solvers::{solve, Method, SolveError, SolverConfig};
use crate::verify::{run_suite, SuiteConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VIOLATIONS: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_DISAGREE: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_DIM_CAP: i32 = 5;

pub const DEFAULT_AGREE_TOL: f64 = 1e-4;
pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_PROPERTY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Validate,
    Solve,
    Compare,
    Properties,
    Reduce,
}

/// Override keys accepted in [`RunManifest::overrides`].
pub const OVERRIDE_KEYS: &[&str] = &[
    "method",
    "tol",
    "max-iter",
    "samples",
    "agree-tol",
    "x0",
    "dim-cap",
];

/// One CLI invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: Command,
    /// Required by every command except `properties`.
    pub datum_path: Option<PathBuf>,
    /// Flat `key -> value` overrides, keys from [`OVERRIDE_KEYS`].
    pub overrides: BTreeMap<String, String>,
    pub output_path: Option<PathBuf>,
    pub seed: u64,
}

impl RunManifest {
    pub fn new(command: Command, datum_path: Option<PathBuf>) -> Self {
        Self {
            command,
            datum_path,
            overrides: BTreeMap::new(),
            output_path: None,
            seed: 0,
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.overrides.insert(key.to_string(), value.to_string());
        self
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        self.overrides
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| format!("invalid --{key} value {v:?}: {e}"))
            })
            .transpose()
    }

    fn check_keys(&self) -> Result<(), String> {
        match self
            .overrides
            .keys()
            .find(|k| !OVERRIDE_KEYS.contains(&k.as_str()))
        {
            Some(k) => Err(format!("unknown override {k:?}")),
            None => Ok(()),
        }
    }

    fn dim_cap(&self) -> Result<usize, String> {
        Ok(self.get("dim-cap")?.unwrap_or(DEFAULT_DIM_CAP))
    }

    fn solver_config(&self, method: Method) -> Result<SolverConfig, String> {
        let mut cfg = match method {
            Method::Capacity => SolverConfig::capacity_default(),
            _ => SolverConfig::default(),
        };
        cfg.seed = self.seed;
        if let Some(tol) = self.get("tol")? {
            cfg.tol = tol;
        }
        if let Some(n) = self.get("max-iter")? {
            cfg.max_iter = n;
        }
        if let Some(path) = self.overrides.get("x0") {
            if method == Method::Capacity {
                return Err("--x0 applies to fixed-point and geodesic only".into());
            }
            let x0 = read_text(path.as_ref())
                .and_then(|t| parse_spd(&t))
                .map_err(|e| format!("--x0: {e}"))?;
            cfg.x0 = Some(x0);
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

/// Result of one command: exit code, JSON document (if any) and a
/// human-readable note for stderr (if any).
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub json: Option<String>,
    pub message: Option<String>,
}

impl Outcome {
    fn input_error(message: impl ToString) -> Self {
        Self {
            exit_code: EXIT_INPUT,
            json: None,
            message: Some(message.to_string()),
        }
    }

    fn document<T: Serialize + ?Sized>(exit_code: i32, value: &T, message: Option<String>) -> Self {
        Self {
            exit_code,
            json: Some(to_json(value)),
            message,
        }
    }
}

pub fn run(manifest: &RunManifest) -> Outcome {
    if let Err(e) = manifest.check_keys() {
        return Outcome::input_error(e);
    }
    match manifest.command {
        Command::Validate => run_validate(manifest),
        Command::Solve => run_solve(manifest),
        Command::Compare => run_compare(manifest),
        Command::Properties => run_properties(manifest),
        Command::Reduce => run_reduce(manifest),
    }
}

fn required_datum(m: &RunManifest) -> Result<BlDatum, Outcome> {
    let path = m
        .datum_path
        .as_ref()
        .ok_or_else(|| Outcome::input_error("a datum file is required"))?;
    load_datum(path).map_err(Outcome::input_error)
}

pub fn run_validate(m: &RunManifest) -> Outcome {
    let Some(path) = m.datum_path.as_ref() else {
        return Outcome::input_error("a datum file is required");
    };
    let raw = match read_text(path)
        .and_then(|t| parse_datum_file(&t))
        .and_then(|f| f.into_raw())
    {
        Ok(raw) => raw,
        Err(e) => return Outcome::input_error(e),
    };
    match validate_datum(raw) {
        Ok(d) => {
            let cfg = ScreenConfig {
                seed: m.seed,
                ..ScreenConfig::default()
            };
            let report = feasibility_screen(&d, &cfg);
            let code = match report.verdict {
                Verdict::ConsistentWithFeasible => EXIT_OK,
                _ => EXIT_INFEASIBLE,
            };
            Outcome::document(code, &FeasibilityJson::new(&report, None), None)
        }
        Err(e) => match FeasibilityReport::from_validation_error(&e) {
            Some(report) => {
                let code = match report.verdict {
                    Verdict::ScalingViolation => EXIT_INFEASIBLE,
                    _ => EXIT_INPUT,
                };
                Outcome::document(
                    code,
                    &FeasibilityJson::new(&report, Some(e.to_string())),
                    Some(e.to_string()),
                )
            }
            None => Outcome::input_error(e),
        },
    }
}

fn dim_cap_outcome(e: &Error) -> Option<Outcome> {
    matches!(e, Error::DimensionCapExceeded { .. }).then(|| Outcome {
        exit_code: EXIT_DIM_CAP,
        json: None,
        message: Some(e.to_string()),
    })
}

pub fn run_solve(m: &RunManifest) -> Outcome {
    let d = match required_datum(m) {
        Ok(d) => d,
        Err(o) => return o,
    };
    let method: Method = match m.get("method") {
        Ok(v) => v.unwrap_or(Method::FixedPoint),
        Err(e) => return Outcome::input_error(e),
    };
    let cfg = match m.solver_config(method) {
        Ok(c) => c,
        Err(e) => return Outcome::input_error(e),
    };
    if method == Method::Capacity {
        let cap = match m.dim_cap() {
            Ok(c) => c,
            Err(e) => return Outcome::input_error(e),
        };
        let k = match build_scaling_operator(&d, cap) {
            Ok(k) => k,
            Err(e) => return dim_cap_outcome(&e).unwrap_or_else(|| Outcome::input_error(e)),
        };
        return match capacity(&k, &cfg) {
            Ok(r) => Outcome::document(EXIT_OK, &CapacityJson::new(&r), None),
            Err(CapacityError::NotConverged(r)) => {
                let msg = CapacityError::NotConverged(r.clone()).to_string();
                Outcome::document(EXIT_NOT_CONVERGED, &CapacityJson::new(&r), Some(msg))
            }
            // Alternating scaling breaks down when the Gram sums lose
            // rank, the operator-side symptom of an unbounded constant.
            Err(CapacityError::Numerical(e @ Error::SingularOperator)) => Outcome {
                exit_code: EXIT_DIVERGED,
                json: None,
                message: Some(e.to_string()),
            },
            Err(CapacityError::Numerical(e)) => Outcome::input_error(e),
        };
    }
    match solve(&d, method, &cfg) {
        Ok(r) => Outcome::document(
            EXIT_OK,
            &SolveJson::new(&r, RunStatus::Converged, None),
            None,
        ),
        Err(e @ SolveError::NotConverged(_)) => {
            let msg = e.to_string();
            let SolveError::NotConverged(r) = e else {
                unreachable!()
            };
            Outcome::document(
                EXIT_NOT_CONVERGED,
                &SolveJson::new(&r, RunStatus::NotConverged, None),
                Some(msg),
            )
        }
        Err(e @ SolveError::Diverged { .. }) => {
            let msg = e.to_string();
            let SolveError::Diverged { evidence, partial } = e else {
                unreachable!()
            };
            Outcome::document(
                EXIT_DIVERGED,
                &SolveJson::new(&partial, RunStatus::Diverged, Some(evidence)),
                Some(msg),
            )
        }
        Err(SolveError::Numerical(e)) => Outcome::input_error(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodCell {
    pub method: Method,
    pub status: RunStatus,
    pub log_bl: Option<f64>,
    /// Stationarity residual, or the doubly-stochastic residual for capacity.
    pub residual: Option<f64>,
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gap {
    pub a: Method,
    pub b: Method,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub agree_tol: f64,
    pub agree: bool,
    pub methods: Vec<MethodCell>,
    pub gaps: Vec<Gap>,
}

fn failed(method: Method, status: RunStatus, message: String) -> MethodCell {
    MethodCell {
        method,
        status,
        log_bl: None,
        residual: None,
        iterations: None,
        message: Some(message),
    }
}

fn compare_cell(d: &BlDatum, method: Method, cfg: &SolverConfig, dim_cap: usize) -> MethodCell {
    if method == Method::Capacity {
        let k = match build_scaling_operator(d, dim_cap) {
            Ok(k) => k,
            Err(e) => return failed(method, RunStatus::Failed, e.to_string()),
        };
        return match capacity(&k, cfg) {
            Ok(r) => MethodCell {
                method,
                status: RunStatus::Converged,
                log_bl: Some(-0.5 * r.log_cap),
                residual: Some(r.ds_residual),
                iterations: Some(r.iterations),
                message: None,
            },
            Err(e @ CapacityError::NotConverged(_)) => {
                failed(method, RunStatus::NotConverged, e.to_string())
            }
            Err(e) => failed(method, RunStatus::Failed, e.to_string()),
        };
    }
    match solve(d, method, cfg) {
        Ok(r) => MethodCell {
            method,
            status: RunStatus::Converged,
            log_bl: Some(r.log_bl),
            residual: Some(r.residual),
            iterations: Some(r.iterations),
            message: None,
        },
        Err(e @ SolveError::NotConverged(_)) => {
            failed(method, RunStatus::NotConverged, e.to_string())
        }
        Err(e @ SolveError::Diverged { .. }) => failed(method, RunStatus::Diverged, e.to_string()),
        Err(e) => failed(method, RunStatus::Failed, e.to_string()),
    }
}

pub fn run_compare(m: &RunManifest) -> Outcome {
    let d = match required_datum(m) {
        Ok(d) => d,
        Err(o) => return o,
    };
    let agree_tol: f64 = match m.get("agree-tol") {
        Ok(v) => v.unwrap_or(DEFAULT_AGREE_TOL),
        Err(e) => return Outcome::input_error(e),
    };
    if !(agree_tol >= 0.0) {
        return Outcome::input_error(format!("--agree-tol must be non-negative, got {agree_tol}"));
    }
    let dim_cap = match m.dim_cap() {
        Ok(c) => c,
        Err(e) => return Outcome::input_error(e),
    };
    let methods = [Method::FixedPoint, Method::Geodesic, Method::Capacity];
    let mut configs = Vec::with_capacity(methods.len());
    for &method in &methods {
        match m.solver_config(method) {
            Ok(c) => configs.push(c),
            Err(e) => return Outcome::input_error(e),
        }
    }
    let cells: Vec<MethodCell> = methods
        .iter()
        .zip(&configs)
        .map(|(&method, cfg)| compare_cell(&d, method, cfg, dim_cap))
        .collect();

    let mut gaps = Vec::new();
    for i in 0..cells.len() {
        for j in (i + 1)..cells.len() {
            if let (Some(a), Some(b)) = (cells[i].log_bl, cells[j].log_bl) {
                gaps.push(Gap {
                    a: cells[i].method,
                    b: cells[j].method,
                    gap: (a - b).abs(),
                });
            }
        }
    }
    let all_ok = cells.iter().all(|c| c.status == RunStatus::Converged);
    let agree = all_ok && gaps.iter().all(|g| g.gap <= agree_tol);
    let report = Comparison {
        agree_tol,
        agree,
        methods: cells,
        gaps,
    };
    let code = if agree { EXIT_OK } else { EXIT_DISAGREE };
    Outcome::document(code, &report, None)
}

pub fn run_properties(m: &RunManifest) -> Outcome {
    let d = match &m.datum_path {
        Some(path) => match load_datum(path) {
            Ok(d) => Some(d),
            Err(e) => return Outcome::input_error(e),
        },
        None => None,
    };
    let samples: usize = match m.get("samples") {
        Ok(v) => v.unwrap_or(DEFAULT_SAMPLES),
        Err(e) => return Outcome::input_error(e),
    };
    let tolerance: f64 = match m.get("tol") {
        Ok(v) => v.unwrap_or(DEFAULT_PROPERTY_TOL),
        Err(e) => return Outcome::input_error(e),
    };
    let dim_cap = match m.dim_cap() {
        Ok(c) => c,
        Err(e) => return Outcome::input_error(e),
    };
    let mut note = None;
    let kraus = match &d {
        Some(d) => match build_scaling_operator(d, dim_cap) {
            Ok(k) => Some(k),
            Err(e) => {
                note = Some(format!("capacity convexity skipped: {e}"));
                None
            }
        },
        None => None,
    };
    let cfg = SuiteConfig {
        samples,
        seed: m.seed,
        tolerance,
        ..SuiteConfig::default()
    };
    let reports = run_suite(d.as_ref(), kraus.as_ref(), &cfg);
    let code = if reports.iter().all(|r| r.passed()) {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    };
    Outcome::document(code, &reports, note)
}

pub fn run_reduce(m: &RunManifest) -> Outcome {
    let d = match required_datum(m) {
        Ok(d) => d,
        Err(o) => return o,
    };
    let cap = match m.dim_cap() {
        Ok(c) => c,
        Err(e) => return Outcome::input_error(e),
    };
    let k = match build_scaling_operator(&d, cap) {
        Ok(k) => k,
        Err(e) => return dim_cap_outcome(&e).unwrap_or_else(|| Outcome::input_error(e)),
    };
    match ReductionJson::new(&k) {
        Ok(r) => Outcome::document(EXIT_OK, &r, None),
        Err(e) => Outcome::input_error(e),
    }
}

/// Writes the outcome's document to `path`, turning a write failure into an
/// input-error outcome.
pub fn persist(outcome: Outcome, path: &std::path::Path) -> Outcome {
    let Some(json) = &outcome.json else {
        return outcome;
    };
    match std::fs::write(path, json) {
        Ok(()) => outcome,
        Err(source) => Outcome::input_error(IoError::Write {
            path: path.to_path_buf(),
            source,
        }),
    }
}
