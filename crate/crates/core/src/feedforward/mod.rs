//! Models that see a timeline either through its final event (logistic
//! regression, MLP) or as a padded `T_max × d` matrix (CNN, CNN-Wide).

mod cnn;
mod cnn_wide;
mod conv;
mod fc;
mod logistic;
mod mlp;

pub use cnn::{CnnConfig, CnnModel, ConvUnit};
pub use cnn_wide::{CnnWideConfig, CnnWideModel, KernelBank};
pub use conv::{Conv2d, Pool, Pool2d};
pub use fc::{positive_probs, weighted_softmax_loss, FcBlock, FcConfig, FcStack};
pub use logistic::{fit_lasso, fit_ridge, Design, LogisticFit, LogisticModel, SolverOptions};
pub use mlp::MlpModel;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::featurizer::Example;

/// The most recent `max_len` events of a timeline.
pub(crate) fn recent_events(ex: &Example, max_len: usize, dim: usize) -> Result<&[Vec<f64>]> {
    if ex.is_empty() {
        return Err(Error::Empty("timeline".into()));
    }
    if ex.dim() != dim {
        return Err(Error::Shape {
            expected: dim,
            got: ex.dim(),
        });
    }
    Ok(&ex.events[ex.len().saturating_sub(max_len)..])
}

/// Left-aligned `max_len × dim` image of the most recent events, zero
/// padded below, with the number of real rows.
pub fn padded_image(ex: &Example, max_len: usize, dim: usize) -> Result<(Vec<f64>, usize)> {
    let events = recent_events(ex, max_len, dim)?;
    let mut img = vec![0.0; max_len * dim];
    for (r, e) in events.iter().enumerate() {
        img[r * dim..(r + 1) * dim].copy_from_slice(e);
    }
    Ok((img, events.len()))
}
