//! Deterministic fan-out over independent jobs.
//!
//! `ASPECTFORGE_THREADS` caps worker parallelism; results are collected by
//! job index, so output order never depends on scheduling.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use aspectforge::Result;

pub const THREADS_ENV: &str = "ASPECTFORGE_THREADS";

/// Worker cap: `ASPECTFORGE_THREADS` if set to a positive integer,
/// otherwise the machine's available parallelism.
pub fn thread_cap() -> usize {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Runs `job(0..n_jobs)` across at most `thread_cap()` workers and returns
/// the results in job-index order. The first error (by job index) wins.
pub fn run_parallel<T, F>(n_jobs: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let workers = thread_cap().min(n_jobs.max(1));
    if n_jobs == 0 {
        return Ok(Vec::new());
    }
    if workers == 1 {
        return (0..n_jobs).map(&job).collect();
    }

    let mut slots: Vec<Option<Result<T>>> = Vec::with_capacity(n_jobs);
    slots.resize_with(n_jobs, || None);
    let slots = Mutex::new(slots);
    let next = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= n_jobs {
                    break;
                }
                let outcome = job(index);
                slots.lock().expect("result mutex poisoned")[index] = Some(outcome);
            });
        }
    });

    slots
        .into_inner()
        .expect("result mutex poisoned")
        .into_iter()
        .map(|slot| slot.expect("every job index was claimed"))
        .collect()
}
