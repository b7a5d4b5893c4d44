//! The model interface shared by every family and the catalog of named
//! configurations.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::crf::{CrfConfig, CrfModel, Encoder, Potential};
use crate::error::{Error, Result};
use crate::featurizer::Example;
use crate::feedforward::{
    CnnConfig, CnnModel, CnnWideConfig, CnnWideModel, FcConfig, LogisticModel, MlpModel, SolverOptions,
};
use crate::layers::CellKind;
use crate::numerics::{Activation, Param, Parameters};
use crate::recurrent::{LossVariant, RecurrentConfig, RecurrentModel, SamplingSchedule, StackConfig};
use crate::rng::{rng_from, Rng};

/// Per-batch training context.
#[derive(Debug, Clone)]
pub struct ForwardCtx {
    /// Loss weight of each outcome class.
    pub class_weights: [f64; 2],
    /// Source of dropout masks and scheduled-sampling draws. `None` turns
    /// dropout off and makes every forward pass deterministic.
    pub rng: Option<Rng>,
    /// Probability of feeding the ground-truth previous label (scheduled
    /// sampling only).
    pub teacher_prob: f64,
}

impl ForwardCtx {
    pub fn deterministic(class_weights: [f64; 2]) -> Self {
        ForwardCtx {
            class_weights,
            rng: None,
            teacher_prob: 1.0,
        }
    }

    pub fn seeded(class_weights: [f64; 2], seed: u64) -> Self {
        ForwardCtx {
            class_weights,
            rng: Some(rng_from(seed)),
            teacher_prob: 1.0,
        }
    }
}

/// A trainable model scoring the final event of a timeline.
pub trait SequenceModel: Parameters {
    /// Mean class-weighted data loss over the batch and its gradient with
    /// respect to every parameter (regularization excluded).
    fn batch_loss(&self, batch: &[&Example], ctx: &mut ForwardCtx) -> Result<(f64, Self)>;

    /// Probability that the final event is followed by a 30-day readmission.
    fn predict(&self, ex: &Example) -> f64;

    fn predict_all(&self, exs: &[&Example]) -> Vec<f64> {
        exs.iter().map(|e| self.predict(e)).collect()
    }
}

/// Average per-example losses and gradients over a batch.
pub(crate) fn mean_over_batch<M, F>(model: &M, batch: &[&Example], mut per_example: F) -> Result<(f64, M)>
where
    M: Parameters,
    F: FnMut(&Example, &mut M) -> Result<f64>,
{
    let mut grads = model.zeros_like();
    let mut total = 0.0;
    for ex in batch {
        total += per_example(ex, &mut grads)?;
    }
    let n = batch.len().max(1) as f64;
    grads.scale(1.0 / n);
    Ok((total / n, grads))
}

/// Penalty of a logistic regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub penalty: Penalty,
    /// Weight examples inversely to class frequency.
    pub balanced: bool,
    #[serde(default)]
    pub solver: SolverOptions,
}

/// Family and shape of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Architecture {
    Recurrent(RecurrentConfig),
    Crf(CrfConfig),
    Mlp(FcConfig),
    Cnn(CnnConfig),
    CnnWide(CnnWideConfig),
    Logistic(LogisticConfig),
}

/// Optimization settings. `lambda` is the L2 weight for neural models and
/// the penalty strength for logistic regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            lambda: 1e-2,
            batch_size: 64,
            max_epochs: 30,
            patience: 10,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", format!("{} must be positive", self.learning_rate)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", format!("{} must be non-negative", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be positive"));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::config("clip_norm", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub architecture: Architecture,
    #[serde(default)]
    pub training: TrainConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        match &self.architecture {
            Architecture::Recurrent(c) => c.validate(),
            Architecture::Crf(c) => c.validate(),
            Architecture::Mlp(c) => c.validate(),
            Architecture::Cnn(c) => c.validate(),
            Architecture::CnnWide(c) => c.validate(),
            Architecture::Logistic(_) => Ok(()),
        }
    }

    pub fn is_logistic(&self) -> bool {
        matches!(self.architecture, Architecture::Logistic(_))
    }

    /// Whether the model reads a fixed-height padded image of the timeline.
    pub fn needs_max_len(&self) -> bool {
        matches!(self.architecture, Architecture::Cnn(_) | Architecture::CnnWide(_))
    }

    /// Teacher-forcing probability for a 0-based epoch.
    pub fn teacher_prob(&self, epoch: usize) -> f64 {
        match &self.architecture {
            Architecture::Recurrent(c) => c.schedule.teacher_prob(epoch),
            _ => 1.0,
        }
    }
}

/// A model of any family behind one interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Model {
    Recurrent(RecurrentModel),
    Crf(CrfModel),
    Mlp(MlpModel),
    Cnn(CnnModel),
    CnnWide(CnnWideModel),
    Logistic(LogisticModel),
}

impl Model {
    /// Instantiate a freshly initialized model. `max_len` is the padded
    /// timeline height used by the convolutional families.
    pub fn build(config: &ModelConfig, input_dim: usize, max_len: usize, rng: &mut Rng) -> Result<Model> {
        config.validate()?;
        Ok(match &config.architecture {
            Architecture::Recurrent(c) => Model::Recurrent(RecurrentModel::new(*c, input_dim, rng)?),
            Architecture::Crf(c) => Model::Crf(CrfModel::new(*c, input_dim, rng)?),
            Architecture::Mlp(c) => Model::Mlp(MlpModel::new(*c, input_dim, rng)?),
            Architecture::Cnn(c) => Model::Cnn(CnnModel::new(c.clone(), input_dim, max_len, rng)?),
            Architecture::CnnWide(c) => Model::CnnWide(CnnWideModel::new(c.clone(), input_dim, max_len, rng)?),
            Architecture::Logistic(_) => Model::Logistic(LogisticModel::zeros(input_dim)),
        })
    }

    pub fn as_logistic(&self) -> Option<&LogisticModel> {
        match self {
            Model::Logistic(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_crf(&self) -> Option<&CrfModel> {
        match self {
            Model::Crf(m) => Some(m),
            _ => None,
        }
    }
}

macro_rules! each_model {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            Model::Recurrent($m) => $body,
            Model::Crf($m) => $body,
            Model::Mlp($m) => $body,
            Model::Cnn($m) => $body,
            Model::CnnWide($m) => $body,
            Model::Logistic($m) => $body,
        }
    };
}

impl Parameters for Model {
    fn params(&self) -> Vec<&Param> {
        each_model!(self, m => m.params())
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        each_model!(self, m => m.params_mut())
    }
}

impl SequenceModel for Model {
    fn batch_loss(&self, batch: &[&Example], ctx: &mut ForwardCtx) -> Result<(f64, Self)> {
        Ok(match self {
            Model::Recurrent(m) => m.batch_loss(batch, ctx).map(|(l, g)| (l, Model::Recurrent(g)))?,
            Model::Crf(m) => m.batch_loss(batch, ctx).map(|(l, g)| (l, Model::Crf(g)))?,
            Model::Mlp(m) => m.batch_loss(batch, ctx).map(|(l, g)| (l, Model::Mlp(g)))?,
            Model::Cnn(m) => m.batch_loss(batch, ctx).map(|(l, g)| (l, Model::Cnn(g)))?,
            Model::CnnWide(m) => m.batch_loss(batch, ctx).map(|(l, g)| (l, Model::CnnWide(g)))?,
            Model::Logistic(m) => m.batch_loss(batch, ctx).map(|(l, g)| (l, Model::Logistic(g)))?,
        })
    }

    fn predict(&self, ex: &Example) -> f64 {
        each_model!(self, m => m.predict(ex))
    }
}

/// Model names in the order of the results table.
pub const CATALOG: [&str; 19] = [
    "cnn",
    "cnn-wide",
    "rnn-convex-hf-lasthf",
    "rnn-lasthf",
    "rnn-uniform-hf",
    "rnn-convex-hf-nonhf",
    "rnnss-convex-hf-lasthf",
    "rnnss-lasthf",
    "rnnss-uniform-hf",
    "rnnss-convex-hf-nonhf",
    "neural-crf-pairwise",
    "neural-crf-unary",
    "crf-pairwise",
    "crf-unary",
    "rnncrf-pairwise",
    "rnncrf-unary",
    "mlp",
    "lr-l2",
    "lr-l1",
];

/// Human-readable table label of a catalog name.
pub fn display_name(name: &str) -> Option<String> {
    let loss_label = |slug: &str| {
        LossVariant::ALL.iter().find(|v| v.slug() == slug).map(|v| match v {
            LossVariant::ConvexHfLastHf => "Convex_HF_lastHF",
            LossVariant::LastHf => "LastHF",
            LossVariant::UniformHf => "Uniform_HF",
            LossVariant::ConvexHfNonHf => "Convex_HF_NonHF",
        })
    };
    let s = match name {
        "cnn" => "CNN".into(),
        "cnn-wide" => "CNN-Wide".into(),
        "neural-crf-pairwise" => "Neural CRF (Pairwise)".into(),
        "neural-crf-unary" => "Neural CRF (Unary)".into(),
        "crf-pairwise" => "CRF Only (Pairwise)".into(),
        "crf-unary" => "CRF Only (Unary)".into(),
        "rnncrf-pairwise" => "RNNCRF (Pairwise)".into(),
        "rnncrf-unary" => "RNNCRF (Unary)".into(),
        "mlp" => "MLP".into(),
        "lr-l2" => "Logistic regression (L2 reg.)".into(),
        "lr-l1" => "Logistic regression (L1 reg.)".into(),
        _ => {
            if let Some(slug) = name.strip_prefix("rnnss-") {
                format!("RNNSS ({})", loss_label(slug)?)
            } else {
                let slug = name.strip_prefix("rnn-")?;
                format!("RNN ({})", loss_label(slug)?)
            }
        }
    };
    Some(s)
}

/// Width of the recurrent state used by the catalog's recurrent models.
pub const DESK_HIDDEN: usize = 32;

/// Default configuration of a catalog model for `input_dim` features.
pub fn default_config(name: &str, input_dim: usize) -> Result<ModelConfig> {
    let unknown = || Error::config("model", format!("unknown model '{name}'; valid names: {}", CATALOG.join(", ")));
    if !CATALOG.contains(&name) {
        return Err(unknown());
    }
    let d = input_dim.max(1);
    let training = |lambda: f64, batch_size: usize| TrainConfig {
        lambda,
        batch_size,
        ..Default::default()
    };
    let rich_stack = |layers: usize| StackConfig {
        cell: CellKind::Gru,
        hidden: DESK_HIDDEN,
        layers,
        input_embed: (d / 2).max(1),
        output_embed: (DESK_HIDDEN / 3).max(1),
        activation: Activation::Tanh,
        dropout: 0.15,
    };
    let (architecture, train) = match name {
        "cnn" => (
            Architecture::Cnn(CnnConfig {
                fc: FcConfig {
                    blocks: 1,
                    divisor: 3,
                    batch_norm: true,
                    activation: Activation::Relu,
                    dropout: 0.0,
                },
                ..Default::default()
            }),
            training(1e-2, 16),
        ),
        "cnn-wide" => (
            Architecture::CnnWide(CnnWideConfig {
                fc: FcConfig {
                    blocks: 1,
                    divisor: 1,
                    batch_norm: true,
                    activation: Activation::Tanh,
                    dropout: 0.0,
                },
                ..Default::default()
            }),
            training(1e-2, 16),
        ),
        "mlp" => (
            Architecture::Mlp(FcConfig {
                blocks: 2,
                divisor: 4,
                batch_norm: true,
                activation: Activation::Relu,
                dropout: 0.0,
            }),
            training(1e-2, 128),
        ),
        "lr-l1" | "lr-l2" => (
            Architecture::Logistic(LogisticConfig {
                penalty: if name == "lr-l1" { Penalty::L1 } else { Penalty::L2 },
                balanced: true,
                solver: SolverOptions::default(),
            }),
            training(1e-1, 64),
        ),
        "crf-pairwise" | "crf-unary" | "neural-crf-pairwise" | "neural-crf-unary" | "rnncrf-pairwise"
        | "rnncrf-unary" => {
            let potential = if name.ends_with("pairwise") { Potential::Pairwise } else { Potential::Unary };
            let config = if name.starts_with("crf-") {
                CrfConfig::linear(potential)
            } else if name.starts_with("neural-") {
                CrfConfig {
                    potential,
                    encoder: Encoder::Neural,
                    stack: StackConfig {
                        layers: 0,
                        output_embed: (d / 2 / 3).max(1),
                        ..rich_stack(0)
                    },
                }
            } else {
                CrfConfig {
                    potential,
                    encoder: Encoder::Recurrent,
                    stack: rich_stack(1),
                }
            };
            (Architecture::Crf(config), training(1e-2, 64))
        }
        _ => {
            let (ss, slug) = match name.strip_prefix("rnnss-") {
                Some(slug) => (true, slug),
                None => (false, name.strip_prefix("rnn-").ok_or_else(unknown)?),
            };
            let loss = *LossVariant::ALL.iter().find(|v| v.slug() == slug).ok_or_else(unknown)?;
            let config = if ss {
                RecurrentConfig {
                    stack: rich_stack(1),
                    loss,
                    alpha: 0.8,
                    schedule: SamplingSchedule::exponential(0.9),
                }
            } else {
                RecurrentConfig {
                    stack: StackConfig {
                        cell: CellKind::Vanilla,
                        hidden: 16,
                        layers: 1,
                        input_embed: 0,
                        output_embed: 0,
                        activation: Activation::Relu,
                        dropout: 0.35,
                    },
                    loss,
                    alpha: 0.8,
                    schedule: SamplingSchedule::default(),
                }
            };
            (Architecture::Recurrent(config), training(1e-2, 64))
        }
    };
    Ok(ModelConfig {
        name: name.into(),
        architecture,
        training: train,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn example(d: usize, len: usize) -> Example {
        Example {
            id: "p".into(),
            events: (0..len).map(|t| (0..d).map(|j| ((t * d + j) as f64 * 0.37).sin()).collect()).collect(),
            targets: vec![1; len],
            index_mask: vec![true; len],
        }
    }

    #[test]
    fn catalog_builds_and_scores() {
        let d = 7;
        for name in CATALOG {
            let cfg = default_config(name, d).unwrap();
            assert_eq!(cfg.name, name);
            assert!(display_name(name).is_some());
            let m = Model::build(&cfg, d, 4, &mut rng_from(1)).unwrap();
            let p = m.predict(&example(d, 3));
            assert!((0.0..=1.0).contains(&p), "{name}: {p}");
            let (loss, g) = m.batch_loss(&[&example(d, 3), &example(d, 1)], &mut ForwardCtx::seeded([1.0, 1.0], 2)).unwrap();
            assert!(loss.is_finite(), "{name}");
            assert_eq!(g.params().len(), m.params().len());
        }
        assert!(default_config("rnn-bogus", d).is_err());
        let err = default_config("gbm", d).unwrap_err();
        assert!(alloc::format!("{err}").contains("rnncrf-pairwise"));
    }

    #[test]
    fn config_json_round_trip() {
        for name in CATALOG {
            let cfg = default_config(name, 11).unwrap();
            let s = serde_json::to_string(&cfg).unwrap();
            assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), cfg, "{s}");
        }
    }

    #[test]
    fn display_names_follow_table_rows() {
        assert_eq!(display_name("rnnss-uniform-hf").unwrap(), "RNNSS (Uniform_HF)");
        assert_eq!(display_name("rnn-convex-hf-lasthf").unwrap(), "RNN (Convex_HF_lastHF)");
        assert_eq!(display_name("crf-unary").unwrap(), "CRF Only (Unary)");
        assert!(display_name("rnn-").is_none());
    }
}
