//! Data-parallel helpers with a sequential fallback when the `parallel`
//! feature is disabled. Results are always collected in index order.

pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads();

    #[cfg(not(feature = "parallel"))]
    return 1;
}

/// Runs `f` on a pool of `workers` threads, or on the current pool for `None`.
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => return pool.install(f),
            Err(e) => log::warn!("could not build a {n}-thread pool ({e}); using the global pool"),
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
    f()
}

/// `(0..len).map(f).collect()`, spread over the thread pool when available.
pub fn map_indexed<R, F>(len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..len).into_par_iter().with_min_len(64).map(f).collect()
    }

    #[cfg(not(feature = "parallel"))]
    (0..len).map(f).collect()
}
