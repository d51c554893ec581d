//! Execution policy for data-parallel inner loops.
//!
//! With the `parallel` feature (default) indexed maps run on the rayon pool;
//! without it they compile to plain sequential loops. Every closure handed to
//! [`map_indexed`] is pure in its index, and results are collected in index
//! order, so parallel and sequential execution produce bitwise identical
//! output. The runtime switch exists so benchmarks and equivalence tests can
//! compare both paths inside one binary.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Enable or disable rayon dispatch at runtime. Process-global; a no-op when
/// the `parallel` feature is off.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::Relaxed);
}

/// True when indexed maps will run on the rayon pool.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::Relaxed)
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_indexed_preserves_order() {
        let out = map_indexed(100, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn sequential_toggle_matches_parallel() {
        let par = map_indexed(1000, |i| (i as f64).sqrt());
        set_parallel(false);
        let seq = map_indexed(1000, |i| (i as f64).sqrt());
        set_parallel(true);
        assert_eq!(par, seq);
    }
}
