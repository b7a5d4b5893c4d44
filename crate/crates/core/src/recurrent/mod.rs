//! Recurrent sequence labelers: vanilla, LSTM and GRU stacks with a softmax
//! output at every event, four sequence objectives and scheduled sampling.

mod model;
mod stack;

pub use model::RecurrentModel;
pub use stack::{RecurrentStack, StackCache, StackConfig};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;

/// How per-event losses combine into one timeline loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// `(1−α)·mean over HF events + α·last HF event`.
    ConvexHfLastHf,
    /// Only the last HF event.
    LastHf,
    /// Mean over HF events.
    UniformHf,
    /// `(1−α)·mean over non-HF events + α·mean over HF events`.
    ConvexHfNonHf,
}

impl LossVariant {
    pub const ALL: [LossVariant; 4] = [
        LossVariant::ConvexHfLastHf,
        LossVariant::LastHf,
        LossVariant::UniformHf,
        LossVariant::ConvexHfNonHf,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            LossVariant::ConvexHfLastHf => "convex-hf-lasthf",
            LossVariant::LastHf => "lasthf",
            LossVariant::UniformHf => "uniform-hf",
            LossVariant::ConvexHfNonHf => "convex-hf-nonhf",
        }
    }
}

/// Weight of each event's loss in the timeline loss, so that
/// `L = Σ_t c_t · l_t`. An empty event subset contributes nothing and its
/// convex weight moves to the other term.
pub fn loss_weights(variant: LossVariant, alpha: f64, index_mask: &[bool]) -> Result<Vec<f64>> {
    let n = index_mask.len();
    if n == 0 {
        return Err(Error::Empty("timeline".into()));
    }
    if !index_mask[n - 1] {
        return Err(Error::Invalid("the final event must be an HF event".into()));
    }
    let n_hf = index_mask.iter().filter(|m| **m).count() as f64;
    let n_other = n as f64 - n_hf;
    let mut c = vec![0.0; n];
    match variant {
        LossVariant::LastHf => c[n - 1] = 1.0,
        LossVariant::UniformHf => {
            for (ci, &m) in c.iter_mut().zip(index_mask) {
                if m {
                    *ci = 1.0 / n_hf;
                }
            }
        }
        LossVariant::ConvexHfLastHf => {
            for (ci, &m) in c.iter_mut().zip(index_mask) {
                if m {
                    *ci = (1.0 - alpha) / n_hf;
                }
            }
            c[n - 1] += alpha;
        }
        LossVariant::ConvexHfNonHf => {
            let (w_hf, w_other) = if n_other == 0.0 { (1.0, 0.0) } else { (alpha, 1.0 - alpha) };
            for (ci, &m) in c.iter_mut().zip(index_mask) {
                *ci = if m { w_hf / n_hf } else { w_other / n_other };
            }
        }
    }
    Ok(c)
}

/// Timeline loss from per-event losses.
pub fn sequence_loss(variant: LossVariant, alpha: f64, losses: &[f64], index_mask: &[bool]) -> Result<f64> {
    if losses.len() != index_mask.len() {
        return Err(Error::Shape {
            expected: index_mask.len(),
            got: losses.len(),
        });
    }
    let c = loss_weights(variant, alpha, index_mask)?;
    Ok(c.iter().zip(losses).map(|(a, b)| a * b).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    None,
    Linear,
    Exponential,
    Sigmoid,
}

/// Decay of the teacher-forcing probability over epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingSchedule {
    pub kind: ScheduleKind,
    /// Base of the exponential decay, or the sigmoid scale.
    pub rho: f64,
    /// Per-epoch decrement of the linear schedule.
    pub slope: f64,
    /// Lower bound of the linear schedule.
    pub floor: f64,
}

impl Default for SamplingSchedule {
    fn default() -> Self {
        SamplingSchedule {
            kind: ScheduleKind::None,
            rho: 0.9,
            slope: 0.05,
            floor: 0.1,
        }
    }
}

impl SamplingSchedule {
    pub fn exponential(rho: f64) -> Self {
        SamplingSchedule {
            kind: ScheduleKind::Exponential,
            rho,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, v: f64, why: &str| Err(Error::config(field, format!("{v}: {why}")));
        match self.kind {
            ScheduleKind::None => Ok(()),
            ScheduleKind::Linear if !(self.slope >= 0.0) => bad("schedule.slope", self.slope, "must be non-negative"),
            ScheduleKind::Linear if !(0.0..=1.0).contains(&self.floor) => bad("schedule.floor", self.floor, "must lie in [0, 1]"),
            ScheduleKind::Exponential if !(self.rho > 0.0 && self.rho <= 1.0) => {
                bad("schedule.rho", self.rho, "exponential decay needs 0 < rho <= 1")
            }
            ScheduleKind::Sigmoid if !(self.rho >= 1.0 && self.rho.is_finite()) => {
                bad("schedule.rho", self.rho, "sigmoid decay needs rho >= 1")
            }
            _ => Ok(()),
        }
    }

    /// Teacher-forcing probability at a 0-based epoch.
    pub fn teacher_prob(&self, epoch: usize) -> f64 {
        let e = epoch as f64;
        match self.kind {
            ScheduleKind::None => 1.0,
            ScheduleKind::Linear => (1.0 - self.slope * e).max(self.floor),
            ScheduleKind::Exponential => self.rho.powf(e),
            ScheduleKind::Sigmoid => self.rho / (self.rho + (e / self.rho).exp()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrentConfig {
    #[serde(flatten)]
    pub stack: StackConfig,
    pub loss: LossVariant,
    pub alpha: f64,
    #[serde(default)]
    pub schedule: SamplingSchedule,
}

impl Default for RecurrentConfig {
    fn default() -> Self {
        RecurrentConfig {
            stack: StackConfig::default(),
            loss: LossVariant::ConvexHfLastHf,
            alpha: 0.8,
            schedule: SamplingSchedule::default(),
        }
    }
}

impl RecurrentConfig {
    pub fn validate(&self) -> Result<()> {
        self.stack.validate()?;
        if self.stack.layers == 0 {
            return Err(Error::config("layers", "a recurrent model needs at least one layer"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha", format!("{} is outside [0, 1]", self.alpha)));
        }
        self.schedule.validate()
    }

    pub fn scheduled_sampling(&self) -> bool {
        self.schedule.kind != ScheduleKind::None
    }
}
