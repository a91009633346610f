//! Data-parallel fan-out over independent work items.
//!
//! [`Fanout::Parallel`] maps items on the rayon pool when the crate is built
//! with the `parallel` feature; otherwise it degrades to the sequential path.
//! Results always come back in input order, so output never depends on the
//! scheduling.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fanout {
    Sequential,
    /// Rayon fan-out. `threads = None` uses the global pool.
    #[default]
    Parallel,
    ParallelWith {
        threads: usize,
    },
}

impl Fanout {
    pub fn from_jobs(jobs: Option<usize>) -> Self {
        match jobs {
            Some(1) => Fanout::Sequential,
            Some(n) if n > 1 => Fanout::ParallelWith { threads: n },
            _ => Fanout::Parallel,
        }
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Fanout::Sequential => map_sequential(items, f),
            Fanout::Parallel => map_parallel(items, f),
            Fanout::ParallelWith { threads } => map_parallel_with(threads, items, f),
        }
    }
}

pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_parallel<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_parallel<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_sequential(items, f)
}

#[cfg(feature = "parallel")]
fn map_parallel_with<T, R, F>(threads: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| map_parallel(items, f)),
        Err(err) => {
            log::warn!("could not build a {threads}-thread pool ({err}); using the global pool");
            map_parallel(items, f)
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn map_parallel_with<T, R, F>(_threads: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_sequential(items, f)
}
