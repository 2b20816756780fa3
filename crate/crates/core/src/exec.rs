//! Batch execution over instance indices.
//!
//! With the `parallel` feature the work is spread over a rayon pool; without
//! it every batch runs on the calling thread. Results always come back in
//! index order.

/// How a batch is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    /// Worker pool of the given size, or one worker per logical core.
    Parallel { workers: Option<usize> },
    /// Everything on the calling thread.
    #[default]
    Sequential,
}

impl ExecMode {
    /// Parallel when the crate was built with the `parallel` feature.
    pub fn best_available(workers: Option<usize>) -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel { workers }
        } else {
            ExecMode::Sequential
        }
    }
}

/// `(0..n).map(job)` under `mode`, in index order.
pub fn map_indexed<T, F>(n: usize, mode: ExecMode, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(job).collect(),
        ExecMode::Parallel { workers } => parallel_map(n, workers, job),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, workers: Option<usize>, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;

    let run = || (0..n).into_par_iter().map(&job).collect();
    match workers {
        Some(w) => match rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
        {
            Ok(pool) => pool.install(run),
            Err(e) => {
                log::warn!("cannot build a pool of {w} workers ({e}); using the global pool");
                run()
            }
        },
        None => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, _workers: Option<usize>, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(job).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = map_indexed(100, ExecMode::Sequential, |i| i * i);
        let par = map_indexed(100, ExecMode::Parallel { workers: Some(4) }, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 49);
    }

    #[test]
    fn empty_batch() {
        let out: Vec<usize> = map_indexed(0, ExecMode::best_available(None), |i| i);
        assert!(out.is_empty());
    }
}
