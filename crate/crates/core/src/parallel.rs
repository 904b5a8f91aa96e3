//! Deterministic parallel helpers.
//!
//! Reductions use a fixed topology: fixed-size chunks summed independently,
//! then the partials summed left to right. The result does not depend on the
//! number of worker threads.

use rayon::prelude::*;

/// Chunk length shared by every fixed-topology reduction.
pub const CHUNK: usize = 1024;

pub fn sum_fixed(values: &[f64]) -> f64 {
    let partials: Vec<f64> = values.par_chunks(CHUNK).map(|c| c.iter().sum()).collect();
    partials.iter().sum()
}

/// `sum_i f(i)` for `i in 0..len` with the same chunking as [`sum_fixed`].
pub fn map_sum_fixed<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = len.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(len)).map(&f).sum())
        .collect();
    partials.iter().sum()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a stream key from the master seed and the work item's parameters.
pub fn chunk_seed(seed: u64, key: &[f64]) -> u64 {
    key.iter().fold(splitmix(seed), |acc, v| splitmix(acc ^ v.to_bits()))
}

/// Run `f` on a pool of `workers` threads (the global pool when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        _ => f(),
    }
}
