use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::folds::{make_folds, FoldPlan};
use super::metrics::{auc_by_length, auc_ci, AucInterval, LengthBucket};
use super::train::{train_model, EpochRecord, TrainOutcome};
use crate::claims::PatientTimeline;
use crate::error::{Error, Result};
use crate::featurizer::{to_examples, Example, FeatureSpec, DEFAULT_COUNT_THRESHOLD};
use crate::model::{Architecture, ModelConfig, Penalty, SequenceModel};
use crate::rng::derive_seed;

/// Penalty strengths tried when a logistic regression is tuned per fold.
pub fn logistic_grid(penalty: Penalty) -> &'static [f64] {
    match penalty {
        Penalty::L1 => &[1e-3, 1e-2, 1e-1],
        Penalty::L2 => &[1e-3, 1e-2, 1e-1, 1.0],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub count_threshold: usize,
    /// Confidence level of the AUC intervals.
    pub level: f64,
    /// Tune logistic-regression penalties per fold on the validation split
    /// and refit on all training patients. When off, logistic regressions
    /// train like the neural models: fixed penalty, validation excluded.
    pub tune_logistic: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            k: 5,
            seed: 0,
            validation_fraction: 0.1,
            count_threshold: DEFAULT_COUNT_THRESHOLD,
            level: 0.95,
            tune_logistic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub patient_id: String,
    pub fold: usize,
    pub length: usize,
    pub label: u8,
    pub score: f64,
}

/// Everything produced by training one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRun {
    pub fold: usize,
    pub spec: FeatureSpec,
    pub max_len: usize,
    pub outcome: TrainOutcome,
    /// Penalty strength the model was finally trained with.
    pub lambda: f64,
    pub n_train: usize,
    pub n_validation: usize,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub test: AucInterval,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub k: usize,
    pub seed: u64,
    pub level: f64,
    pub folds: Vec<FoldSummary>,
    pub mean_fold_auc: f64,
    /// AUC over the concatenated test folds.
    pub pooled: AucInterval,
    pub by_length: Vec<LengthBucket>,
    pub curves: Vec<Vec<EpochRecord>>,
    pub warnings: Vec<String>,
    pub predictions: Vec<Prediction>,
}

fn pick<'a>(exs: &'a [Example], idx: &[usize], pos: &[usize]) -> Vec<&'a Example> {
    idx.iter().map(|i| &exs[pos[*i]]).collect()
}

/// Train and score one fold. Features are fitted on the fold's training
/// patients only.
pub fn run_fold(config: &ModelConfig, timelines: &[PatientTimeline], plan: &FoldPlan, fold: usize, opts: &CvOptions) -> Result<FoldRun> {
    let f = plan.folds.get(fold).ok_or_else(|| Error::config("fold", alloc::format!("{fold} is out of range")))?;
    if timelines.len() != plan.ids.len() {
        return Err(Error::Shape {
            expected: plan.ids.len(),
            got: timelines.len(),
        });
    }
    let train_tl: Vec<PatientTimeline> = f.train_all().iter().map(|&i| timelines[i].clone()).collect();
    let spec = FeatureSpec::fit(&train_tl, opts.count_threshold)?;
    let exs = to_examples(&spec, timelines);
    let pos: Vec<usize> = (0..exs.len()).collect();
    let train = pick(&exs, &f.train, &pos);
    let validation = pick(&exs, &f.validation, &pos);
    let test = pick(&exs, &f.test, &pos);
    let max_len = train.iter().chain(&validation).map(|e| e.len()).max().unwrap_or(1);
    let seed = derive_seed(opts.seed, 1000 + fold as u64);

    let (outcome, lambda, n_train, n_validation) = match &config.architecture {
        Architecture::Logistic(lc) if opts.tune_logistic => {
            let mut best: Option<(f64, f64)> = None;
            for &lambda in logistic_grid(lc.penalty) {
                let mut c = config.clone();
                c.training.lambda = lambda;
                let val = train_model(&c, &train, &validation, max_len, seed)?
                    .best_validation_auc
                    .unwrap_or(f64::NEG_INFINITY);
                if best.is_none_or(|(b, _)| val > b) {
                    best = Some((val, lambda));
                }
            }
            let lambda = best.map_or(config.training.lambda, |b| b.1);
            let mut c = config.clone();
            c.training.lambda = lambda;
            let all: Vec<&Example> = train.iter().chain(&validation).copied().collect();
            let mut out = train_model(&c, &all, &[], max_len, seed)?;
            out.best_validation_auc = best.map(|b| b.0);
            (out, lambda, all.len(), 0)
        }
        _ => (
            train_model(config, &train, &validation, max_len, seed)?,
            config.training.lambda,
            train.len(),
            validation.len(),
        ),
    };
    let predictions = f
        .test
        .iter()
        .zip(&test)
        .map(|(&i, ex)| Prediction {
            patient_id: plan.ids[i].clone(),
            fold,
            length: ex.len(),
            label: ex.label(),
            score: outcome.model.predict(ex),
        })
        .collect();
    Ok(FoldRun {
        fold,
        spec,
        max_len,
        outcome,
        lambda,
        n_train,
        n_validation,
        predictions,
    })
}

/// Combine fold runs into a report. Runs may arrive in any order.
pub fn assemble(name: &str, plan: &FoldPlan, runs: &[FoldRun], level: f64) -> Result<EvalReport> {
    let mut runs: Vec<&FoldRun> = runs.iter().collect();
    runs.sort_by_key(|r| r.fold);
    if runs.is_empty() {
        return Err(Error::Empty("fold runs".into()));
    }
    let mut folds = Vec::new();
    let mut predictions = Vec::new();
    let mut warnings = Vec::new();
    for r in &runs {
        let s: Vec<f64> = r.predictions.iter().map(|p| p.score).collect();
        let y: Vec<u8> = r.predictions.iter().map(|p| p.label).collect();
        folds.push(FoldSummary {
            fold: r.fold,
            n_train: r.n_train,
            n_validation: r.n_validation,
            test: auc_ci(&s, &y, level)?,
            best_epoch: r.outcome.best_epoch,
            epochs_run: r.outcome.curve.len(),
            lambda: r.lambda,
        });
        warnings.extend(r.outcome.warnings.iter().map(|w| alloc::format!("fold {}: {w}", r.fold)));
        predictions.extend(r.predictions.iter().cloned());
    }
    let s: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let y: Vec<u8> = predictions.iter().map(|p| p.label).collect();
    let l: Vec<usize> = predictions.iter().map(|p| p.length).collect();
    Ok(EvalReport {
        model: name.into(),
        k: plan.k,
        seed: plan.seed,
        level,
        mean_fold_auc: folds.iter().map(|f| f.test.auc).sum::<f64>() / folds.len() as f64,
        folds,
        pooled: auc_ci(&s, &y, level)?,
        by_length: auc_by_length(&s, &y, &l)?,
        curves: runs.iter().map(|r| r.outcome.curve.clone()).collect(),
        warnings,
        predictions,
    })
}

/// Sequential cross-validation of one model.
pub fn cross_validate(config: &ModelConfig, timelines: &[PatientTimeline], opts: &CvOptions) -> Result<(EvalReport, Vec<FoldRun>)> {
    let plan = make_folds(timelines, opts.k, opts.validation_fraction, opts.seed)?;
    let runs = (0..opts.k)
        .map(|f| run_fold(config, timelines, &plan, f, opts))
        .collect::<Result<Vec<_>>>()?;
    let report = assemble(&config.name, &plan, &runs, opts.level)?;
    Ok((report, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::build_timelines;
    use crate::model::default_config;
    use crate::synthgen::{generate, CohortConfig};

    fn cohort(n: usize, seed: u64) -> Vec<PatientTimeline> {
        let claims = generate(&CohortConfig {
            n_patients: n,
            seed,
            ..Default::default()
        })
        .unwrap();
        build_timelines(&claims).timelines
    }

    #[test]
    fn cross_validation_is_clean_and_reproducible() {
        let tls = cohort(400, 3);
        let opts = CvOptions {
            seed: 11,
            ..Default::default()
        };
        let mut cfg = default_config("crf-unary", 1).unwrap();
        cfg.training.max_epochs = 3;
        let (a, runs) = cross_validate(&cfg, &tls, &opts).unwrap();
        let (b, _) = cross_validate(&cfg, &tls, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predictions.len(), tls.len());
        let plan = make_folds(&tls, 5, 0.1, 11).unwrap();
        for (r, f) in runs.iter().zip(&plan.folds) {
            let test_ids = plan.ids_of(&f.test);
            assert!(plan.ids_of(&f.train_all()).iter().all(|id| !test_ids.contains(id)));
            assert!(r.predictions.iter().all(|p| test_ids.contains(&p.patient_id.as_str())));
        }
        assert!(a.pooled.ci_low <= a.pooled.auc && a.pooled.auc <= a.pooled.ci_high);
        assert_eq!(a.by_length.len(), 5);
    }

    #[test]
    fn logistic_tuning_picks_from_grid() {
        let tls = cohort(300, 5);
        let cfg = default_config("lr-l2", 1).unwrap();
        let (report, runs) = cross_validate(&cfg, &tls, &CvOptions::default()).unwrap();
        for r in &runs {
            assert!(logistic_grid(Penalty::L2).contains(&r.lambda));
            assert_eq!(r.n_validation, 0);
        }
        assert!(report.pooled.auc > 0.5);
        let fixed = CvOptions {
            tune_logistic: false,
            ..Default::default()
        };
        let (_, runs) = cross_validate(&cfg, &tls, &fixed).unwrap();
        assert!(runs.iter().all(|r| r.lambda == cfg.training.lambda && r.n_validation > 0));
    }
}
