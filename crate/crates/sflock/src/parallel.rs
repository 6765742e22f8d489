//! Row-partitioned multithreaded acceleration field.

use sflock_core::model::WeightFunction;
use sflock_core::{AccelerationField, Dynamics, Result};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "SFLOCK_THREADS";

/// Rows per thread below which extra threads are not worth spawning.
const MIN_ROWS_PER_THREAD: usize = 16;

/// Worker count from `SFLOCK_THREADS` (default 1; invalid values fall back
/// to 1).
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse().ok()).filter(|&t: &usize| t >= 1).unwrap_or(1)
}

/// [`Dynamics`] with its agent rows split across scoped threads. Each row is
/// computed by the same code in the same order as the serial field, so the
/// output is bit-identical for any thread count.
#[derive(Debug, Clone)]
pub struct ThreadedField {
    inner: Dynamics,
    threads: usize,
}

impl ThreadedField {
    /// Wraps `inner` with at most `threads` workers.
    pub fn new(inner: Dynamics, threads: usize) -> Self {
        Self { inner, threads: threads.max(1) }
    }

    fn workers(&self) -> usize {
        self.threads.min(self.inner.n_agents() / MIN_ROWS_PER_THREAD).max(1)
    }
}

impl AccelerationField for ThreadedField {
    fn n_agents(&self) -> usize {
        self.inner.n_agents()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn weight(&self) -> &WeightFunction {
        self.inner.weight()
    }

    fn accelerations(&self, positions: &[f64], velocities: &[f64], out: &mut [f64]) -> Result<()> {
        let workers = self.workers();
        if workers == 1 {
            return self.inner.accelerations(positions, velocities, out);
        }
        let n = self.n_agents();
        let d = self.dim();
        let chunk = n.div_ceil(workers);
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = out
                .chunks_mut(chunk * d)
                .enumerate()
                .map(|(c, slab)| {
                    let rows = c * chunk..((c + 1) * chunk).min(n);
                    let inner = &self.inner;
                    scope.spawn(move || inner.accelerations_rows(positions, velocities, rows, slab))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        // First failing chunk holds the lowest failing row, as in the serial loop.
        results.into_iter().collect()
    }
}
