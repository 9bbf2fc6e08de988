//! Trial scheduling: a rayon pool when the `parallel` feature is on, a plain
//! loop otherwise. Results always come back in input order.

/// How independent work units are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `workers == 0` lets rayon pick one thread per core.
    Parallel { workers: usize },
}

impl Execution {
    /// One worker means sequential; anything else asks for a pool.
    pub fn from_workers(workers: usize) -> Self {
        if workers == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { workers }
        }
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match *self {
            Execution::Sequential => items.iter().map(f).collect(),
            Execution::Parallel { workers } => parallel_map(items, workers, f),
        }
    }
}

impl Default for Execution {
    fn default() -> Self {
        Execution::Parallel { workers: 0 }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("could not start a thread pool ({e}); running sequentially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: &[T], _workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    log::debug!("built without the `parallel` feature; running sequentially");
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..200).collect();
        let seq = Execution::Sequential.map(&items, |x| x * x);
        for workers in [0, 2, 8] {
            assert_eq!(Execution::Parallel { workers }.map(&items, |x| x * x), seq);
        }
        assert_eq!(Execution::from_workers(1), Execution::Sequential);
    }
}
