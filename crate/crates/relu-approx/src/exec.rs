//! Execution helpers: data-parallel maps with a sequential fallback.
//!
//! All Monte Carlo loops are chunked so that results are identical whether
//! the `parallel` feature is enabled or not: each chunk derives its RNG
//! stream deterministically from the master seed and the chunk index.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CHUNK: usize = 1024;

/// SplitMix64 step, used to derive independent named sub-streams from one seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn chunk_rng(seed: u64, chunk_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, chunk_index))
}

/// Map `f` over `0..n`, collecting in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential version of [`map_indexed`], kept public for benchmarking
/// the parallel core against the fallback path.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Chunked Monte Carlo reduction: runs `chunks` chunks of up to `CHUNK`
/// samples each (the last chunk may be shorter) and sums the per-chunk
/// outputs of `f(chunk_rng, chunk_len)`. Deterministic in `seed` and
/// independent of thread count.
pub fn mc_sum<F>(total_samples: usize, seed: u64, f: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng, usize) -> Vec<f64> + Sync,
{
    let chunks = total_samples.div_ceil(CHUNK);
    let partials = map_indexed(chunks, |c| {
        let len = if c + 1 == chunks && !total_samples.is_multiple_of(CHUNK) {
            total_samples % CHUNK
        } else {
            CHUNK
        };
        let mut rng = chunk_rng(seed, c as u64);
        f(&mut rng, len)
    });
    let width = partials.first().map(|p| p.len()).unwrap_or(0);
    let mut acc = vec![0.0; width];
    for p in partials {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(42, 0), derive_seed(42, 1));
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
    }

    #[test]
    fn mc_sum_deterministic_and_chunk_exact() {
        let f = |rng: &mut ChaCha8Rng, n: usize| {
            use rand::Rng;
            let s: f64 = (0..n).map(|_| rng.gen::<f64>()).sum();
            vec![s, n as f64]
        };
        let a = mc_sum(2500, 7, f);
        let b = mc_sum(2500, 7, f);
        assert_eq!(a, b);
        assert_eq!(a[1], 2500.0);
    }
}
