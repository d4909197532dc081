//! Row-parallel map with results in input order.
//!
//! Every row is a pure function of its inputs, so the worker count never
//! changes the output.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Applies `f` to every item using `threads` workers (0 = rayon default).
pub fn map_rows<T, U, F>(items: &[T], threads: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let run = || items.par_iter().map(&f).collect::<Result<Vec<U>>>();
    if threads == 0 {
        return run();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(run)
}
