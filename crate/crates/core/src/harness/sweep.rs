//! Batches of independent runs, on the rayon pool when the `parallel`
//! feature is enabled.

use super::config::Scenario;
use super::report::RunReport;
use super::{run, RunError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Falls back to sequential without the `parallel` feature.
    Parallel,
}

/// Runs every scenario; results keep the input order.
pub fn run_batch(scenarios: &[Scenario], exec: Exec) -> Vec<Result<RunReport, RunError>> {
    map_batch(scenarios, exec, run)
}

/// Applies `f` to every item, in parallel if requested and available.
pub fn map_batch<I, T, F>(items: &[I], exec: Exec, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    match exec {
        Exec::Sequential => items.iter().map(f).collect(),
        Exec::Parallel => parallel_map(items, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Copies of `base` with seeds `first..first + count`.
pub fn seed_range(base: &Scenario, first: u64, count: u64) -> Vec<Scenario> {
    (first..first + count).map(|seed| Scenario { seed, ..base.clone() }).collect()
}
