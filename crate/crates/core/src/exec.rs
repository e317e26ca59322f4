//! Index-parallel execution.
//!
//! Every parallel entry point in the crate goes through [`map_indexed`]. Work
//! item `i` must depend only on `i` (and shared read-only state), so the output
//! vector is identical for any worker count. With the `parallel` feature
//! disabled, or with one worker, items run in index order on the calling thread.

use crate::error::Result;

/// Number of worker threads used by parallel entry points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Workers(usize);

impl Workers {
    pub fn new(n: usize) -> Self {
        Workers(n.max(1))
    }

    pub fn sequential() -> Self {
        Workers(1)
    }

    /// One worker per available core.
    pub fn available() -> Self {
        Workers::new(
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
        )
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl Default for Workers {
    fn default() -> Self {
        Workers::sequential()
    }
}

/// Evaluates `f(0), …, f(n-1)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, workers: Workers, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers.get() > 1 && n > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.get())
                .build();
            if let Ok(pool) = pool {
                return pool.install(|| (0..n).into_par_iter().map(&f).collect());
            }
        }
    }
    let _ = workers;
    (0..n).map(f).collect()
}

/// Fallible variant of [`map_indexed`]. On failure the error of the lowest
/// failing index is returned, whatever the worker count.
pub fn try_map_indexed<T, F>(n: usize, workers: Workers, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_indexed(n, workers, f).into_iter().collect()
}

/// Evaluates `f` over contiguous chunks of `0..n` and returns per-chunk results
/// in chunk order. Chunk boundaries depend only on `n` and `chunk`.
pub fn map_chunks<T, F>(n: usize, chunk: usize, workers: Workers, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    map_indexed(count, workers, |c| {
        let lo = c * chunk;
        f(lo..(lo + chunk).min(n))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = map_indexed(1000, Workers::sequential(), f);
        let b = map_indexed(1000, Workers::new(8), f);
        assert_eq!(a, b);
    }

    #[test]
    fn lowest_error_wins() {
        let r = try_map_indexed(100, Workers::new(4), |i| {
            if i % 7 == 3 {
                Err(crate::error::Error::Numeric(format!("{i}")))
            } else {
                Ok(i)
            }
        });
        match r {
            Err(crate::error::Error::Numeric(s)) => assert_eq!(s, "3"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn chunks_cover_range() {
        let sums = map_chunks(10, 3, Workers::new(2), |r| r.len());
        assert_eq!(sums, vec![3, 3, 3, 1]);
    }

    #[test]
    fn zero_workers_clamps() {
        assert_eq!(Workers::new(0).get(), 1);
    }
}
