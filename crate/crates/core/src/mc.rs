//! Deterministic parallel Monte-Carlo blocks.
//!
//! Samples are split into fixed-size blocks; block `b` draws from
//! `SeededRng::for_task(seed, label, b)`. Results come back in block order, so
//! any reduction is independent of the thread count.

use rayon::prelude::*;

use crate::error::Result;
use crate::precision::SeededRng;

pub const BLOCK: u64 = 4096;

/// Runs `f(rng, count)` over consecutive blocks covering `samples` draws.
pub fn blocks<T, F>(seed: u64, label: &str, samples: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut SeededRng, u64) -> Result<T> + Sync,
{
    let nb = samples.div_ceil(BLOCK);
    (0..nb)
        .into_par_iter()
        .map(|b| {
            let mut rng = SeededRng::for_task(seed, label, b);
            let count = BLOCK.min(samples - b * BLOCK);
            f(&mut rng, count)
        })
        .collect()
}

/// Per-sample values, concatenated in block order.
pub fn collect<T, F>(seed: u64, label: &str, samples: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut SeededRng) -> Result<T> + Sync,
{
    let parts = blocks(seed, label, samples, |rng, count| (0..count).map(|_| f(rng)).collect::<Result<Vec<T>>>())?;
    Ok(parts.into_iter().flatten().collect())
}
