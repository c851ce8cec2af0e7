//! Monte Carlo drivers and figure tables.

pub mod config;
pub mod csv;
pub mod figures;
pub mod trial;
pub mod validate;

pub use config::ExperimentConfig;
pub use csv::Table;
pub use trial::{run_trial, TrialRecord};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs `f` for every index on a pool of `workers` threads (0 = default),
/// preserving index order in the output.
pub fn parallel_map<T, F>(count: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
}

/// Per-trial seed, shared across sweep points.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}
