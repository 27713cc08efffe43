//! Row-parallel helpers for the stencil kernels.
//!
//! Every kernel writes each output cell from the previous buffer only, so
//! serial and parallel execution give bitwise-identical fields. Reductions
//! are limited to `max`, which is order-independent.

use rayon::prelude::*;

/// Below this many cells the kernels run serially.
pub const PARALLEL_MIN_CELLS: usize = 1 << 15;

/// Environment variable capping kernel threads (0 or unset = rayon default).
pub const THREADS_ENV: &str = "COLDGEN_THREADS";

/// Applies `COLDGEN_THREADS` to rayon's global pool. Returns the thread
/// count requested, if any. Safe to call more than once; only the first
/// successful call takes effect.
pub fn init_from_env() -> Option<usize> {
    let n = std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse::<usize>()
        .ok()?;
    if n > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
        Some(n)
    } else {
        None
    }
}

/// Calls `f(j, row_j)` for every row of `out` and returns the max of the
/// per-row results (or 0 for an empty buffer).
pub(crate) fn map_rows_max<F>(out: &mut [f64], nx: usize, f: F) -> f64
where
    F: Fn(usize, &mut [f64]) -> f64 + Sync,
{
    if out.len() >= PARALLEL_MIN_CELLS && rayon::current_num_threads() > 1 {
        out.par_chunks_mut(nx)
            .enumerate()
            .map(|(j, row)| f(j, row))
            .reduce(|| 0.0, f64::max)
    } else {
        out.chunks_mut(nx)
            .enumerate()
            .map(|(j, row)| f(j, row))
            .fold(0.0, f64::max)
    }
}

/// Calls `f(j, row_a, row_b)` for every row of two buffers with one layout.
pub(crate) fn map_rows2<F>(a: &mut [f64], b: &mut [f64], nx: usize, f: F)
where
    F: Fn(usize, &mut [f64], &mut [f64]) + Sync,
{
    if a.len() >= PARALLEL_MIN_CELLS && rayon::current_num_threads() > 1 {
        a.par_chunks_mut(nx)
            .zip(b.par_chunks_mut(nx))
            .enumerate()
            .for_each(|(j, (ra, rb))| f(j, ra, rb));
    } else {
        a.chunks_mut(nx)
            .zip(b.chunks_mut(nx))
            .enumerate()
            .for_each(|(j, (ra, rb))| f(j, ra, rb));
    }
}
