use rayon::prelude::*;

use crate::error::{Error, Result};

/// Maps `f` over `0..n` with at most `jobs` threads, preserving index order.
pub fn map_indexed<T, F>(n: usize, jobs: usize, f: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if jobs <= 1 || n <= 1 {
        return Ok((0..n).map(&f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
}
