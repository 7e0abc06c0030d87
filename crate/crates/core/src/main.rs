use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use blgeo::cli::{persist, run, Command, Outcome, RunManifest, EXIT_INPUT};

/// Brascamp-Lieb constants by geodesically convex optimization.
#[derive(Debug, Parser)]
#[command(name = "blgeo", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Check a datum and screen it for infeasibility.
    Validate(Common),
    /// Compute log BL with one method.
    Solve(SolveArgs),
    /// Run all three methods and compare their estimates.
    Compare(CompareArgs),
    /// Run the randomized convexity property suites.
    Properties(PropertiesArgs),
    /// Print the operator-scaling reduction of a datum.
    Reduce(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Datum JSON file.
    datum: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON document here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Starting point for fixed-point or geodesic, as JSON rows.
    #[arg(long)]
    x0: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// fixed-point, geodesic or capacity.
    #[arg(long, default_value = "fixed-point")]
    method: String,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    solver: SolverArgs,
    /// Largest tolerated pairwise gap between methods.
    #[arg(long = "agree-tol")]
    agree_tol: Option<f64>,
}

#[derive(Debug, Args)]
struct PropertiesArgs {
    /// Datum JSON file; datum-specific suites are skipped without one.
    datum: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    /// Violation tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn insert<T: ToString>(map: &mut BTreeMap<String, String>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        map.insert(key.to_string(), v.to_string());
    }
}

fn solver_overrides(map: &mut BTreeMap<String, String>, s: SolverArgs) {
    insert(map, "tol", s.tol);
    insert(map, "max-iter", s.max_iter);
    insert(map, "x0", s.x0.map(|p| p.display().to_string()));
}

fn manifest(cli: Cli) -> RunManifest {
    let mut overrides = BTreeMap::new();
    let (command, datum_path, output_path, seed) = match cli.command {
        Sub::Validate(c) => (Command::Validate, Some(c.datum), c.output, c.seed),
        Sub::Reduce(c) => (Command::Reduce, Some(c.datum), c.output, c.seed),
        Sub::Solve(a) => {
            overrides.insert("method".into(), a.method);
            solver_overrides(&mut overrides, a.solver);
            (
                Command::Solve,
                Some(a.common.datum),
                a.common.output,
                a.common.seed,
            )
        }
        Sub::Compare(a) => {
            solver_overrides(&mut overrides, a.solver);
            insert(&mut overrides, "agree-tol", a.agree_tol);
            (
                Command::Compare,
                Some(a.common.datum),
                a.common.output,
                a.common.seed,
            )
        }
        Sub::Properties(a) => {
            insert(&mut overrides, "samples", a.samples);
            insert(&mut overrides, "tol", a.tol);
            (Command::Properties, a.datum, a.output, a.seed)
        }
    };
    if let Ok(cap) = std::env::var("BLGEO_DIM_CAP") {
        overrides.insert("dim-cap".into(), cap);
    }
    RunManifest {
        command,
        datum_path,
        overrides,
        output_path,
        seed,
    }
}

fn main() -> ExitCode {
    let m = manifest(Cli::parse());
    let mut outcome = run(&m);
    if let Some(path) = &m.output_path {
        outcome = persist(outcome, path);
    } else if let Some(json) = &outcome.json {
        print!("{json}");
    }
    let Outcome {
        exit_code, message, ..
    } = outcome;
    if let Some(msg) = message {
        let prefix = if exit_code == EXIT_INPUT {
            "error"
        } else {
            "note"
        };
        eprintln!("blgeo: {prefix}: {msg}");
    }
    ExitCode::from(exit_code as u8)
}
