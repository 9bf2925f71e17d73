//! Parallel execution helpers with a sequential fallback.
//!
//! All parallelism in this crate goes through `map_indexed`: results are
//! written to index-addressed slots and reductions happen afterwards in a
//! fixed order, so outputs are bit-identical regardless of thread count or
//! whether the `parallel` feature is enabled at all.

/// Computes `f(0..n)` sequentially. Always available; used by benchmarks to
/// compare against the parallel path.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Computes `f(0..n)`, in parallel when the `parallel` feature is enabled.
/// The result vector is ordered by index.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed_seq(n, f)
}

/// Caps the global thread pool. A no-op without the `parallel` feature or
/// when `threads` is `None`. Returns an error message if the pool was already
/// initialized with a different size.
#[cfg(feature = "parallel")]
pub fn configure_threads(threads: Option<usize>) -> Result<(), String> {
    match threads {
        Some(n) if n >= 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string()),
        Some(_) => Err("thread count must be at least 1".into()),
        None => Ok(()),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(threads: Option<usize>) -> Result<(), String> {
    match threads {
        Some(0) => Err("thread count must be at least 1".into()),
        _ => Ok(()),
    }
}
