//! Sample-level sharding. Chunk i always uses stream `base + i` and has a
//! fixed size, so results do not depend on the number of worker threads.

use qpush_core::sampling::RngStream;
use rayon::prelude::*;

pub const CHUNK: usize = 4096;

/// Distinct stream ranges for the samplers of the suite.
pub mod streams {
    const STRIDE: u64 = 1 << 32;
    pub const PUSHTASEP: u64 = STRIDE;
    pub const CYLINDER: u64 = 2 * STRIDE;
    pub const SQUARE: u64 = 3 * STRIDE;
    pub const RSK: u64 = 4 * STRIDE;
    pub const DEGENERATE: u64 = 5 * STRIDE;
    pub const CONCENTRATION: u64 = 6 * STRIDE;
    pub const LOWER_TAIL: u64 = 16 * STRIDE;
    pub const DECOMPOSITION: u64 = 32 * STRIDE;
    pub const LLN: u64 = 33 * STRIDE;
}

/// Runs `f(rng, count)` on consecutive chunks of `total` samples and
/// concatenates the per-chunk vectors in chunk order.
pub fn sharded<T, F>(seed: u64, base: u64, total: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream, usize) -> Vec<T> + Sync,
{
    let chunks = total.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, base + i as u64);
            f(&mut rng, CHUNK.min(total - i * CHUNK))
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Fallible variant of [`sharded`]; the first error in chunk order wins.
pub fn try_sharded<T, E, F>(seed: u64, base: u64, total: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(&mut RngStream, usize) -> Result<Vec<T>, E> + Sync,
{
    let chunks = total.div_ceil(CHUNK);
    let parts: Vec<Result<Vec<T>, E>> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, base + i as u64);
            f(&mut rng, CHUNK.min(total - i * CHUNK))
        })
        .collect();
    let mut out = Vec::with_capacity(total);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draw(seed: u64, threads: usize) -> Vec<f64> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| sharded(seed, 7, 3 * CHUNK + 5, |rng, n| (0..n).map(|_| rng.uniform()).collect()))
    }

    #[test]
    fn independent_of_thread_count() {
        let a = draw(1, 1);
        assert_eq!(a.len(), 3 * CHUNK + 5);
        assert_eq!(a, draw(1, 3));
        assert_ne!(a, draw(2, 1));
    }

    #[test]
    fn errors_surface() {
        let r: Result<Vec<u8>, String> = try_sharded(0, 0, 2 * CHUNK, |rng, _| {
            if rng.stream_id() == 1 {
                Err("boom".into())
            } else {
                Ok(vec![0])
            }
        });
        assert_eq!(r.unwrap_err(), "boom");
        let empty: Vec<u8> = sharded(0, 0, 0, |_, n| vec![0; n]);
        assert!(empty.is_empty());
    }
}
