//! Parallel drivers. Work items carry their own seeds and results are
//! reassembled in a fixed order, so output does not depend on the thread
//! count.

use rayon::prelude::*;
use tensorreg_core::experiment::{
    self, plan_rate_experiment, run_rate_cell, summarize_rate, width_cell_seed, width_row, RateExperimentConfig,
    RateReport, WidthReport,
};
use tensorreg_core::spectral::{
    combine_width, validate_width_request, width_batch, width_batches, HopmOptions, WidthEstimate,
};
use tensorreg_core::RegularizerSpec;

use crate::error::{Error, Result};

/// `threads == 0` lets rayon pick.
pub fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))
}

pub fn rate_experiment(config: &RateExperimentConfig, pool: &rayon::ThreadPool) -> Result<RateReport> {
    let plan = plan_rate_experiment(config)?;
    let jobs: Vec<(usize, usize)> =
        config.n_grid.iter().flat_map(|&n| (0..config.replications).map(move |r| (n, r))).collect();
    let cells = pool.install(|| jobs.par_iter().map(|&(n, r)| run_rate_cell(&plan, n, r)).collect::<Vec<_>>());
    let cells = cells.into_iter().collect::<tensorreg_core::Result<Vec<_>>>()?;
    Ok(summarize_rate(&plan, cells)?)
}

/// Width estimate with batches spread over the pool.
pub fn gaussian_width(
    spec: &RegularizerSpec,
    shape: &[usize],
    draws: usize,
    seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<WidthEstimate> {
    validate_width_request(spec, shape, draws)?;
    let hopm = HopmOptions::default();
    let batches = pool.install(|| {
        (0..width_batches(draws))
            .into_par_iter()
            .map(|b| width_batch(spec, shape, draws, seed, b, &hopm))
            .collect::<Vec<_>>()
    });
    let batches = batches.into_iter().collect::<tensorreg_core::Result<Vec<_>>>()?;
    Ok(combine_width(spec, shape, seed, &batches))
}

pub fn width_experiment(
    kinds: &[RegularizerSpec],
    shapes: &[Vec<usize>],
    draws: usize,
    seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<WidthReport> {
    if kinds.is_empty() || shapes.is_empty() {
        return Err(Error::Usage("width needs at least one kind and one shape".into()));
    }
    let mut rows = Vec::with_capacity(kinds.len() * shapes.len());
    for (i, k) in kinds.iter().enumerate() {
        for (j, s) in shapes.iter().enumerate() {
            let est = gaussian_width(k, s, draws, width_cell_seed(seed, i, j), pool)?;
            rows.push(width_row(&est));
        }
    }
    Ok(experiment::width_report(kinds, draws, seed, rows))
}
