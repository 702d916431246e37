//! Parallel sweeps. Cells run on a private thread pool and results are
//! collected by cell index, so the output does not depend on the worker count.

use anodyne_core::sweep::{run_cell, sweep_cells, ConfigPatch, Scenario, SweepSummary};
use rayon::prelude::*;

use crate::{Error, Result};

/// Runs every (patch, seed) cell with up to `workers` threads.
pub fn run_sweep_parallel(
    base: &Scenario,
    seeds: &[u64],
    patches: &[ConfigPatch],
    workers: usize,
) -> Result<Vec<SweepSummary>> {
    let cells = sweep_cells(base, seeds, patches);
    if workers <= 1 {
        return Ok(cells.iter().map(run_cell).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| cells.par_iter().map(run_cell).collect()))
}

/// Parses `a..b` (inclusive), `a..=b`, or a comma-separated list.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::Invalid(format!("bad seed list `{spec}`; expected a..b or a,b,c"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    if let Some((lo, hi)) = spec.split_once("..") {
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let (lo, hi) = (num(lo)?, num(hi)?);
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',').map(num).collect()
}
