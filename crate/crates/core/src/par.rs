//! Data-parallel loop helpers.
//!
//! With the `parallel` feature these dispatch to rayon once a buffer is long
//! enough to amortize the fork-join cost; otherwise they run sequentially.
//! Reductions always combine fixed-size chunk partials in chunk order, so a
//! result does not depend on how many workers took part.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Buffers shorter than this are processed on the calling thread.
pub const PAR_MIN_LEN: usize = 8192;

/// Chunk length used by reductions and per-cell maps.
pub const CHUNK: usize = 1024;

/// Fill `out[k] = f(k)` for every index.
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    for_each_chunk_mut(out, CHUNK, |offset, chunk| {
        for (k, slot) in chunk.iter_mut().enumerate() {
            *slot = f(offset + k);
        }
    });
}

/// Call `f(offset, chunk)` on consecutive `chunk_len` slices of `out`.
pub fn for_each_chunk_mut<F>(out: &mut [f64], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    if out.len() >= PAR_MIN_LEN {
        out.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(k, chunk)| f(k * chunk_len, chunk));
        return;
    }
    out.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(k, chunk)| f(k * chunk_len, chunk));
}

/// Deterministic reduction of `f(k)` over `0..len` with `combine`.
pub fn reduce_indexed<F, C>(len: usize, identity: f64, f: F, combine: C) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
    C: Fn(f64, f64) -> f64 + Sync + Send,
{
    let n_chunks = len.div_ceil(CHUNK);
    let partial = |k: usize| {
        let start = k * CHUNK;
        let end = (start + CHUNK).min(len);
        (start..end).fold(identity, |acc, i| combine(acc, f(i)))
    };
    #[cfg(feature = "parallel")]
    if len >= PAR_MIN_LEN {
        let partials: Vec<f64> = (0..n_chunks).into_par_iter().map(partial).collect();
        return partials.into_iter().fold(identity, &combine);
    }
    (0..n_chunks).map(partial).fold(identity, &combine)
}

/// Deterministic sum of `f(k)` over `0..len`.
pub fn sum_indexed<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    reduce_indexed(len, 0.0, f, |a, b| a + b)
}

/// Deterministic sum of a slice.
pub fn sum(values: &[f64]) -> f64 {
    sum_indexed(values.len(), |i| values[i])
}

/// Run `f` on each of `items`, in parallel when enabled, preserving order.
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
