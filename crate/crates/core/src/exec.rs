//! Sequential / data-parallel execution switch.
//!
//! Every data-parallel loop in the crate (per-video feature extraction,
//! per-video decoding, per-item metric statistics, grid points) goes through
//! [`Exec`]. Results are always returned in input order, so both modes produce
//! identical output. When the `parallel` feature is off, [`Exec::Parallel`]
//! falls back to the sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    /// Like [`Exec::map`] but bounded to `workers` threads in parallel mode.
    #[cfg_attr(not(feature = "parallel"), allow(unused_variables))]
    pub fn map_with_workers<T, R, F>(self, items: &[T], workers: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel if workers > 1 => {
                match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                    Ok(pool) => pool.install(|| items.par_iter().map(f).collect()),
                    Err(e) => {
                        log::warn!("thread pool unavailable ({e}), running sequentially");
                        items.iter().map(f).collect()
                    }
                }
            }
            _ => items.iter().map(f).collect(),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}
