//! Replication-level parallelism.
//!
//! Every experiment is a map over independent replications followed by a
//! fold in replication order, so results do not depend on scheduling. With
//! the `parallel` feature the map runs on the current rayon pool; without it
//! (or with [`Execution::Sequential`]) it is a plain loop.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Map `job` over `0..count`, returning results in index order.
pub fn replicate<T, F>(exec: Execution, count: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..count).map(job).collect(),
        Execution::Parallel => parallel_map(count, job),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(count: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(job).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(count: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).map(job).collect()
}
