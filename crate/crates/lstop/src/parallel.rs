//! Thread-pool execution of the core's ordered-map contract, plus the
//! wall clock. Results always come back in index order, so any thread count
//! produces bit-identical reductions downstream.

use std::time::Instant;

use lstop_core::train::{BatchRunner, Clock};
use rayon::prelude::*;

pub struct RayonRunner {
    pool: rayon::ThreadPool,
    threads: usize,
}

impl RayonRunner {
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()?;
        Ok(RayonRunner { pool, threads })
    }

    pub fn threads(&self) -> usize {
        self.threads
    }
}

impl BatchRunner for RayonRunner {
    fn run<T: Send>(&self, n: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        self.pool
            .install(|| (0..n).into_par_iter().map(f).collect())
    }
}

pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            start: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_secs(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Thread-count resolution: explicit flag, then `LSTP_THREADS`, then all
/// available cores.
pub fn resolve_threads(flag: Option<usize>) -> usize {
    if let Some(n) = flag {
        return n.max(1);
    }
    if let Ok(v) = std::env::var("LSTP_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
