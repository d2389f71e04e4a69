//! Execution strategy for the per-reference work loop.
//!
//! Work is mapped in fixed-size batches whose results are returned in input
//! order, so anything folded over them afterwards sees the same sequence of
//! floating-point operations whatever the worker count. Without the
//! `parallel` feature every strategy runs sequentially.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon workers; `None` uses the global pool.
    #[default]
    Parallel,
    /// Rayon with a dedicated pool of this many workers.
    Threads(usize),
}

impl Execution {
    pub fn from_threads(threads: Option<usize>) -> Self {
        match threads {
            Some(1) => Execution::Sequential,
            Some(n) => Execution::Threads(n),
            None => Execution::Parallel,
        }
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            #[cfg(feature = "parallel")]
            Execution::Threads(_) => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            _ => items.iter().map(f).collect(),
        }
    }

    /// Runs `job` inside a pool sized for this strategy.
    pub fn install<R: Send>(&self, job: impl FnOnce() -> R + Send) -> R {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Threads(n) => match rayon::ThreadPoolBuilder::new().num_threads(*n).build() {
                Ok(pool) => pool.install(job),
                Err(_) => job(),
            },
            _ => job(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u32> = (0..1000).collect();
        for exec in [Execution::Sequential, Execution::Parallel, Execution::Threads(3)] {
            let out = exec.install(|| exec.map(&items, |x| x * 2));
            assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        }
    }
}
