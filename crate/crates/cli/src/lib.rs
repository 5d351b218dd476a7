//! Experiment runner for the `smallcap` laboratory: JSON configs in,
//! `results.csv` and `summary.json` out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod output;

use config::{Loaded, SCHEMA_VERSION};
use error::CliError;
use output::{RunOutput, Summary};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "SMALLCAP_WORKERS";

/// Validates and runs a config on the current rayon pool.
pub fn run(loaded: &Loaded) -> Result<RunOutput, CliError> {
    let validated = loaded.validate()?;
    let outcome = experiments::execute(&loaded.config, &validated)?;
    let (csv, errors) = outcome.table.to_csv()?;
    let pass = errors == 0 && outcome.fits.iter().all(|f| f.pass) && outcome.checks.iter().all(|c| c.pass);
    let summary = Summary {
        schema: SCHEMA_VERSION,
        kind: loaded.config.kind.as_str().into(),
        config: serde_json::to_value(&loaded.config).expect("config serializes"),
        csv_hash: output::content_hash(&csv),
        rows: outcome.table.rows.len(),
        errors,
        fits: outcome.fits,
        checks: outcome.checks,
        pass,
    };
    Ok(RunOutput { csv, summary, artifacts: outcome.artifacts })
}

/// Runs on a dedicated pool of `workers` threads (the global pool when
/// `None`).
pub fn run_with_workers(loaded: &Loaded, workers: Option<usize>) -> Result<RunOutput, CliError> {
    match workers {
        None => run(loaded),
        Some(w) => {
            let pool =
                rayon::ThreadPoolBuilder::new().num_threads(w).build().map_err(|e| CliError::Pool(e.to_string()))?;
            pool.install(|| run(loaded))
        }
    }
}

/// Worker count from the environment, if set.
pub fn workers_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(Some(w)),
            _ => Err(CliError::Pool(format!("{WORKERS_ENV}={s:?} is not a positive integer"))),
        },
    }
}
