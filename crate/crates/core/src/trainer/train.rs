use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::folds::class_weights;
use super::metrics::auc;
use crate::error::{Error, Result};
use crate::featurizer::Example;
use crate::feedforward::{fit_lasso, fit_ridge, Design};
use crate::model::{Architecture, ForwardCtx, Model, ModelConfig, Penalty, SequenceModel};
use crate::numerics::{clip_global_norm, l2_regularize, AdamConfig, AdamState};
use crate::rng::{child_rng, derive_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean class-weighted data loss over the epoch's batches.
    pub train_loss: f64,
    pub validation_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Checkpoint of the selected epoch.
    pub model: Model,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation_auc: Option<f64>,
    pub warnings: Vec<String>,
}

fn labels_of(exs: &[&Example]) -> Vec<u8> {
    exs.iter().map(|e| e.label()).collect()
}

fn validation_auc(model: &Model, validation: &[&Example]) -> Result<Option<f64>> {
    if validation.is_empty() {
        return Ok(None);
    }
    let scores = model.predict_all(validation);
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("validation score".into()));
    }
    auc(&scores, &labels_of(validation)).map(Some)
}

/// Fit a logistic regression by its convex solver. The penalty strength is
/// `config.training.lambda`.
pub fn fit_logistic(config: &ModelConfig, train: &[&Example], validation: &[&Example]) -> Result<TrainOutcome> {
    let Architecture::Logistic(lc) = &config.architecture else {
        return Err(Error::config("architecture", "not a logistic regression"));
    };
    let dim = train.first().ok_or_else(|| Error::Empty("training set".into()))?.dim();
    let weights = if lc.balanced { class_weights(&labels_of(train))? } else { [1.0, 1.0] };
    let design = Design::new(train, dim, weights)?;
    let lambda = config.training.lambda;
    let fit = match lc.penalty {
        Penalty::L1 => fit_lasso(&design, lambda, lc.solver)?,
        Penalty::L2 => fit_ridge(&design, lambda, lc.solver)?,
    };
    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push(format!(
            "solver stopped after {} iterations with optimality {:.3e}",
            fit.iterations, fit.grad_norm
        ));
    }
    if !fit.objective.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            loss: fit.objective,
        });
    }
    let model = Model::Logistic(fit.model);
    let val = validation_auc(&model, validation)?;
    Ok(TrainOutcome {
        model,
        curve: alloc::vec![EpochRecord {
            epoch: 0,
            train_loss: fit.objective,
            validation_auc: val,
        }],
        best_epoch: 0,
        best_validation_auc: val,
        warnings,
    })
}

/// Train a model on `train`, selecting the epoch with the highest
/// validation AUC (earliest on ties) and stopping after `patience` epochs
/// without improvement. Logistic regressions go to their convex solver.
pub fn train_model(
    config: &ModelConfig,
    train: &[&Example],
    validation: &[&Example],
    max_len: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.is_logistic() {
        return fit_logistic(config, train, validation);
    }
    let first = train.first().ok_or_else(|| Error::Empty("training set".into()))?;
    if validation.is_empty() {
        return Err(Error::Empty("validation set".into()));
    }
    let tc = config.training;
    let mut model = Model::build(config, first.dim(), max_len, &mut child_rng(seed, 0))?;
    let weights = class_weights(&labels_of(train))?;
    let mut adam = AdamState::new(
        &model,
        AdamConfig {
            learning_rate: tc.learning_rate,
            ..Default::default()
        },
    );
    let mut ctx = ForwardCtx::seeded(weights, derive_seed(seed, 1));
    let mut shuffle = child_rng(seed, 2);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    for epoch in 0..tc.max_epochs {
        ctx.teacher_prob = config.teacher_prob(epoch);
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| train[i]).collect();
            let (loss, mut grads) = model.batch_loss(&batch, &mut ctx)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            total += loss * batch.len() as f64;
            l2_regularize(&model, &mut grads, tc.lambda, false);
            if tc.clip_norm > 0.0 {
                clip_global_norm(&mut grads, tc.clip_norm);
            }
            adam.step(&mut model, &grads).map_err(|_| Error::Diverged { epoch, loss })?;
        }
        let train_loss = total / train.len() as f64;
        let val = validation_auc(&model, validation).map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged { epoch, loss: train_loss },
            other => other,
        })?;
        let v = val.unwrap_or(f64::NEG_INFINITY);
        curve.push(EpochRecord {
            epoch,
            train_loss,
            validation_auc: val,
        });
        if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
            best = Some((v, epoch, model.clone()));
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.1);
        if epoch - best_epoch >= tc.patience {
            break;
        }
    }
    let (auc, best_epoch, model) = best.ok_or_else(|| Error::Empty("no epoch trained".into()))?;
    Ok(TrainOutcome {
        model,
        curve,
        best_epoch,
        best_validation_auc: Some(auc),
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_config;
    use crate::numerics::Parameters;
    use crate::rng::rng_from;
    use alloc::vec;
    use rand::Rng as _;

    pub(crate) fn toy_examples(n: usize, d: usize, seed: u64) -> Vec<Example> {
        let mut rng = rng_from(seed);
        (0..n)
            .map(|i| {
                let len = 1 + i % 3;
                let y = (i % 4 == 0) as u8;
                let events: Vec<Vec<f64>> = (0..len)
                    .map(|_| (0..d).map(|j| rng.random_range(-1.0..1.0) + if j == 0 { y as f64 } else { 0.0 }).collect())
                    .collect();
                let mut targets = vec![0; len];
                targets[len - 1] = y;
                Example {
                    id: format!("p{i}"),
                    events,
                    targets,
                    index_mask: vec![true; len],
                }
            })
            .collect()
    }

    #[test]
    fn patience_zero_trains_one_epoch() {
        let exs = toy_examples(60, 4, 1);
        let refs: Vec<&Example> = exs.iter().collect();
        let mut cfg = default_config("mlp", 4).unwrap();
        cfg.training.patience = 0;
        cfg.training.max_epochs = 20;
        let out = train_model(&cfg, &refs[..40], &refs[40..], 3, 5).unwrap();
        assert_eq!(out.curve.len(), 1);
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn selection_picks_best_recorded_epoch_and_is_deterministic() {
        let exs = toy_examples(80, 4, 2);
        let refs: Vec<&Example> = exs.iter().collect();
        let mut cfg = default_config("rnn-lasthf", 4).unwrap();
        cfg.training.max_epochs = 8;
        cfg.training.patience = 3;
        cfg.training.learning_rate = 1e-2;
        let a = train_model(&cfg, &refs[..60], &refs[60..], 3, 9).unwrap();
        let b = train_model(&cfg, &refs[..60], &refs[60..], 3, 9).unwrap();
        assert_eq!(a, b);
        let best = a.best_validation_auc.unwrap();
        assert!(a.curve.iter().all(|r| r.validation_auc.unwrap() <= best));
        let first = a.curve.iter().position(|r| r.validation_auc == Some(best)).unwrap();
        assert_eq!(first, a.best_epoch);
        let again = validation_auc(&a.model, &refs[60..]).unwrap().unwrap();
        assert_eq!(again, best);
    }

    #[test]
    fn divergence_is_reported() {
        let mut exs = toy_examples(40, 3, 3);
        exs[0].events[0][1] = f64::NAN;
        let refs: Vec<&Example> = exs.iter().collect();
        let cfg = default_config("mlp", 3).unwrap();
        let err = train_model(&cfg, &refs[..30], &refs[30..], 3, 1).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 0, .. }), "{err:?}");
    }

    #[test]
    fn logistic_uses_solver() {
        let exs = toy_examples(120, 5, 4);
        let refs: Vec<&Example> = exs.iter().collect();
        let mut cfg = default_config("lr-l1", 5).unwrap();
        cfg.training.lambda = 1e-2;
        let out = train_model(&cfg, &refs[..100], &refs[100..], 1, 0).unwrap();
        let w = out.model.as_logistic().unwrap().weights();
        assert!(w[0] > 0.0);
        assert!(out.best_validation_auc.unwrap() > 0.5);
        assert_eq!(out.model.params().len(), 2);
    }
}
