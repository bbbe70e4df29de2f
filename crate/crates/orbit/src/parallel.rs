//! Thread-count-invariant parallel maps.
//!
//! Work items are independent and results are collected in index order, so
//! outputs do not depend on the number of threads or on scheduling.

use rayon::prelude::*;

use crate::error::{CliError, Result};

/// Builds a pool with `threads` workers (`None` uses rayon's default).
pub fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    if threads == Some(0) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))
}

/// `f(0..n)` in index order.
pub fn map<T, F>(pool: &rayon::ThreadPool, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// Like [`map`] but stops at the first error in index order.
pub fn try_map<T, E, F>(pool: &rayon::ThreadPool, n: usize, f: F) -> std::result::Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> std::result::Result<T, E> + Sync + Send,
{
    map(pool, n, f).into_iter().collect()
}
