//! Thread-pool executor.

use fnl_core::exec::Executor;
use rayon::prelude::*;

pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// A pool with `threads` workers; `None` uses the available parallelism.
    pub fn new(threads: Option<usize>) -> Result<Self, rayon::ThreadPoolBuildError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            b = b.num_threads(n.max(1));
        }
        Ok(RayonExecutor { pool: b.build()? })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for RayonExecutor {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..len).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fnl_core::exec::Sequential;

    #[test]
    fn matches_sequential_order() {
        let e = RayonExecutor::new(Some(4)).unwrap();
        assert_eq!(e.threads(), 4);
        let f = |i: usize| (i * i) as f64 / 7.0;
        assert_eq!(e.map(10_000, f), Sequential.map(10_000, f));
    }
}
