//! Parallel execution of independent folds and search trials. Every job
//! draws from its own derived seed, so results do not depend on the worker
//! count or completion order.

use std::time::Instant;

use rayon::prelude::*;
use readmit_core::claims::PatientTimeline;
use readmit_core::hyperopt::{rank_trials, run_trial, SearchData, SearchOptions, SearchSpace, TrialRecord};
use readmit_core::model::ModelConfig;
use readmit_core::trainer::{assemble, make_folds, run_fold, CvOptions, EvalReport, FoldPlan, FoldRun};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    if workers == 0 {
        return Err(CliError::Config("workers: must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Other(e.into()))
}

/// Cross-validate one model with folds trained concurrently.
pub fn cross_validate(
    config: &ModelConfig,
    timelines: &[PatientTimeline],
    opts: &CvOptions,
    workers: usize,
) -> CliResult<(EvalReport, FoldPlan, Vec<FoldRun>)> {
    let plan = make_folds(timelines, opts.k, opts.validation_fraction, opts.seed)?;
    let runs = pool(workers)?.install(|| {
        (0..opts.k)
            .into_par_iter()
            .map(|f| run_fold(config, timelines, &plan, f, opts))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let report = assemble(&config.name, &plan, &runs, opts.level)?;
    Ok((report, plan, runs))
}

/// A trial record as logged, with its wall time and rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLine {
    #[serde(flatten)]
    pub record: TrialRecord,
    pub rank: usize,
    pub wall_time_s: f64,
}

/// Run every trial of a search, in parallel, returned in trial order.
pub fn search(space: &SearchSpace, data: &SearchData, opts: &SearchOptions, workers: usize) -> CliResult<Vec<TrialLine>> {
    space.validate()?;
    if opts.n_trials == 0 {
        return Err(CliError::Config("trials: need at least one trial".into()));
    }
    let timed: Vec<(TrialRecord, f64)> = pool(workers)?.install(|| {
        (0..opts.n_trials)
            .into_par_iter()
            .map(|t| {
                let start = Instant::now();
                let r = run_trial(space, data, t, opts);
                (r, start.elapsed().as_secs_f64())
            })
            .collect()
    });
    let records: Vec<TrialRecord> = timed.iter().map(|(r, _)| r.clone()).collect();
    let mut rank = vec![0; records.len()];
    for (pos, &i) in rank_trials(&records).iter().enumerate() {
        rank[i] = pos + 1;
    }
    Ok(timed
        .into_iter()
        .zip(rank)
        .map(|((record, wall_time_s), rank)| TrialLine {
            record,
            rank,
            wall_time_s,
        })
        .collect())
}
