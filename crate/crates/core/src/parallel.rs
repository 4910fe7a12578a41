//! Deterministic replicate-parallel reduction.
//!
//! Replicates are grouped into fixed-size chunks whose boundaries depend only on
//! the replicate count. Each chunk is folded sequentially, and chunk results are
//! merged left to right, so floating-point sums are identical for any thread
//! count.

use rayon::prelude::*;

pub const CHUNK: u64 = 256;

/// Runs `fold(acc, replicate)` over `0..reps` and merges chunk accumulators in
/// index order.
pub fn replicate_reduce<A, I, F, M>(reps: u64, init: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, u64) + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunks = reps.div_ceil(CHUNK);
    let partials: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(reps);
            for r in lo..hi {
                fold(&mut acc, r);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in partials {
        merge(&mut total, p);
    }
    total
}

/// Counts the replicates for which `pred` holds.
pub fn count_where<F>(reps: u64, pred: F) -> u64
where
    F: Fn(u64) -> bool + Sync + Send,
{
    replicate_reduce(
        reps,
        || 0u64,
        |acc, r| {
            if pred(r) {
                *acc += 1;
            }
        },
        |a, b| *a += b,
    )
}

/// Evaluates `f` on every replicate, returning results in replicate order.
pub fn replicate_map<T, F>(reps: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..reps).into_par_iter().map(f).collect()
}
