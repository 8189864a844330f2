//! Order-preserving parallel map; results never depend on the worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// `f(0), …, f(len − 1)` evaluated on `workers` threads, collected in index order.
pub fn map_indexed<R, F>(workers: usize, len: usize, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync + Send,
{
    if workers <= 1 {
        return (0..len).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| (0..len).into_par_iter().map(f).collect())
}
