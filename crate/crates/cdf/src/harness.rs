//! Parallel versions of the experiment runners. Work fans out per center on
//! a pool of `jobs` threads; results are collected in center order, so the
//! output does not depend on the thread count.

use cdf_core::eval::{
    aggregate_sweep, coldstart_center, fit_donor, forecast_center, ColdStartMethod, EvalError, ExperimentConfig,
    ExperimentResult, ForecastMethod, SweepRow, SweepTarget,
};
use cdf_core::model::CdfModel;
use cdf_core::Fleet;
use rayon::prelude::*;
use rayon::ThreadPool;

/// Thread pool with `jobs` workers; 0 lets rayon choose.
pub fn pool(jobs: usize) -> ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool")
}

pub fn forecast_experiment(
    pool: &ThreadPool,
    fleet: &Fleet,
    methods: &[ForecastMethod],
    config: &ExperimentConfig,
) -> Result<ExperimentResult, EvalError> {
    if methods.is_empty() {
        return Ok(ExperimentResult::default());
    }
    let per_center: Vec<_> =
        pool.install(|| fleet.panels().par_iter().map(|p| forecast_center(p, methods, config)).collect::<Result<_, _>>())?;
    Ok(ExperimentResult { rows: per_center.into_iter().flatten().collect() })
}

pub fn donors(pool: &ThreadPool, fleet: &Fleet, config: &ExperimentConfig) -> Result<Vec<CdfModel>, EvalError> {
    pool.install(|| fleet.panels().par_iter().map(|p| fit_donor(p, config)).collect())
}

pub fn coldstart_experiment(
    pool: &ThreadPool,
    fleet: &Fleet,
    methods: &[ColdStartMethod],
    config: &ExperimentConfig,
) -> Result<ExperimentResult, EvalError> {
    if methods.is_empty() {
        return Ok(ExperimentResult::default());
    }
    let models = donors(pool, fleet, config)?;
    let per_center: Vec<_> = pool.install(|| {
        (0..fleet.len())
            .into_par_iter()
            .map(|t| coldstart_center(fleet, &models, t, methods, config))
            .collect::<Result<_, _>>()
    })?;
    Ok(ExperimentResult { rows: per_center.into_iter().flatten().collect() })
}

pub fn sweep(
    pool: &ThreadPool,
    fleet: &Fleet,
    target: SweepTarget,
    ks: &[usize],
    config: &ExperimentConfig,
) -> Result<Vec<SweepRow>, EvalError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(EvalError::InvalidConfig("k range must be non-empty and start at 1 or more"));
    }
    let models = donors(pool, fleet, config)?;
    let per_center: Vec<_> = pool.install(|| {
        (0..fleet.len())
            .into_par_iter()
            .map(|t| cdf_core::eval::sweep_center(fleet, &models, t, target, ks, config))
            .collect::<Result<_, _>>()
    })?;
    Ok(aggregate_sweep(ks, &per_center))
}
