//! Replica-level parallelism.
//!
//! Simulation state is never shared between replicas; each replica is a pure
//! function of its index, and results come back in index order. With the
//! `parallel` feature the map runs on rayon, otherwise on the calling thread.
//! Both paths return identical vectors.

/// Runs `f(0..count)` sequentially.
pub fn map_replicas_seq<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

/// Runs `f(0..count)`, in parallel when the `parallel` feature is enabled.
///
/// `jobs` caps the number of worker threads; `None` uses rayon's global pool.
#[cfg(feature = "parallel")]
pub fn map_replicas<T, F>(count: usize, jobs: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;

    match jobs {
        Some(1) => map_replicas_seq(count, f),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| (0..count).into_par_iter().map(&f).collect()),
            Err(err) => {
                log::warn!("could not build a {n}-thread pool ({err}); running sequentially");
                map_replicas_seq(count, f)
            }
        },
        None => (0..count).into_par_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_replicas<T, F>(count: usize, _jobs: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_replicas_seq(count, f)
}
