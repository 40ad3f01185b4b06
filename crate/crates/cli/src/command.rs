//! Running an experiment and writing its outputs.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use streamal_core::harness::{aggregate_runs, run_replicas};
use streamal_core::{AggregateResult, Error, RunOptions};
use thiserror::Error as ThisError;

use crate::config::ExperimentSpec;
use crate::export::{export_csv, write_curves, write_traces};

#[derive(Debug, ThisError)]
pub enum CommandError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 1,
            CommandError::Runtime(_) => 2,
        }
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CommandError::Config(m),
            other => CommandError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub results: Vec<AggregateResult<f64>>,
    /// Files written, aggregate CSV first.
    pub files: Vec<PathBuf>,
}

pub fn run_options(spec: &ExperimentSpec) -> RunOptions {
    RunOptions {
        stabilization: spec.diagnostics,
        loocv: spec.diagnostics,
        stop_tol: spec.stop_tol,
        trace: spec.dump_traces,
        ..RunOptions::default()
    }
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CommandError>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    let fail = |e: std::io::Error| CommandError::Runtime(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(fs::File::create(path).map_err(fail)?);
    f(&mut w).map_err(fail)
}

/// Runs every strategy of `spec` and writes `<out>/<name>.csv` plus optional dumps.
pub fn execute(spec: &ExperimentSpec) -> Result<Outcome, CommandError> {
    spec.validate()
        .map_err(|e| CommandError::Config(e.to_string()))?;
    let runs = run_replicas::<f64>(
        &spec.scenario,
        &spec.strategies,
        spec.replicas,
        &run_options(spec),
    )?;
    let results = aggregate_runs(&spec.name, &spec.scenario, &spec.strategies, &runs)?;

    fs::create_dir_all(&spec.out)
        .map_err(|e| CommandError::Runtime(format!("{}: {e}", spec.out.display())))?;
    let main = spec.out.join(format!("{}.csv", spec.name));
    export_csv(&results, &main).map_err(|e| CommandError::Runtime(e.to_string()))?;
    let mut files = vec![main];
    if spec.dump_curves {
        let path = spec.out.join(format!("{}.curves.csv", spec.name));
        write_with(&path, |w| write_curves(w, &spec.name, &runs))?;
        files.push(path);
    }
    if spec.dump_traces {
        let path = spec.out.join(format!("{}.traces.csv", spec.name));
        write_with(&path, |w| write_traces(w, &runs))?;
        files.push(path);
    }
    Ok(Outcome { results, files })
}

/// [`execute`] mapped to a process exit code: 0 success, 1 configuration error,
/// 2 runtime error.
pub fn run_command(spec: &ExperimentSpec) -> i32 {
    match execute(spec) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
