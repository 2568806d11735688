//! Thread-count resolution and deterministic batched Monte Carlo.
//!
//! Work is cut into fixed batches, each with its own generator sub-stream;
//! results are collected in batch order and merged sequentially, so output
//! never depends on the number of worker threads.

use hdclt_core::seed::{batch_plan, stream_rng, Rng, BATCH_SIZE};
use rayon::prelude::*;

use crate::error::{AppError, AppResult};

/// Environment variable consulted when no thread count is given.
pub const THREADS_ENV: &str = "HDCLT_THREADS";

/// Explicit count, else `HDCLT_THREADS`, else `None` (rayon's default).
pub fn resolve_threads(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var(THREADS_ENV).ok()?.trim().parse().ok())
        .filter(|&t| t > 0)
}

/// Runs `f` inside a pool capped at `threads` workers.
pub fn with_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> AppResult<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| AppError::validation(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Splits `budget` draws into batches, runs them in parallel and merges the
/// per-batch accumulators in batch order.
pub fn par_batches<A, I, F, M>(
    budget: usize,
    seed: u64,
    init: I,
    run: F,
    merge: M,
) -> hdclt_core::Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut Rng, usize, &mut A) -> hdclt_core::Result<()> + Sync,
    M: Fn(&mut A, &A),
{
    let parts: Vec<hdclt_core::Result<A>> = batch_plan(budget, BATCH_SIZE)
        .into_par_iter()
        .map(|(stream, draws)| {
            let mut rng = stream_rng(seed, stream);
            let mut acc = init();
            run(&mut rng, draws, &mut acc)?;
            Ok(acc)
        })
        .collect();
    let mut total = init();
    for part in parts {
        merge(&mut total, &part?);
    }
    Ok(total)
}

/// Maps `f` over `0..count` in parallel, keeping index order.
pub fn par_indexed<T, F>(count: usize, f: F) -> hdclt_core::Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> hdclt_core::Result<T> + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}
