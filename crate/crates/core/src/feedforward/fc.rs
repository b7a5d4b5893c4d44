use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;
use crate::layers::{BatchNorm, BnCache, Dense};
use crate::numerics::{dropout_mask, softmax, Activation, Param};
use crate::rng::Rng;

/// Fully connected blocks `affine → batch norm → φ → dropout` followed by a
/// two-way softmax output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcConfig {
    /// Number of hidden blocks.
    pub blocks: usize,
    /// Each block is `⌊previous width / divisor⌋` wide.
    pub divisor: usize,
    pub batch_norm: bool,
    pub activation: Activation,
    pub dropout: f64,
}

impl Default for FcConfig {
    fn default() -> Self {
        FcConfig {
            blocks: 2,
            divisor: 4,
            batch_norm: true,
            activation: Activation::Relu,
            dropout: 0.15,
        }
    }
}

impl FcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.divisor == 0 {
            return Err(Error::config("fc.divisor", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("fc.dropout", format!("{} is outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn widths(&self, input: usize) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.blocks);
        let mut prev = input;
        for _ in 0..self.blocks {
            prev = (prev / self.divisor).max(1);
            w.push(prev);
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcBlock {
    pub dense: Dense,
    pub bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcStack {
    pub config: FcConfig,
    pub blocks: Vec<FcBlock>,
    pub out: Dense,
}

/// Batch activations of one forward pass; all matrices are row-major with
/// one row per example.
#[derive(Debug, Clone, Default)]
pub struct FcCache {
    batch: usize,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    normed: Vec<Vec<f64>>,
    bn: Vec<Option<BnCache>>,
    act: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
    last: Vec<f64>,
}

fn rows(m: &[f64], width: usize) -> core::slice::Chunks<'_, f64> {
    m.chunks(width.max(1))
}

impl FcStack {
    pub fn new(name: &str, config: FcConfig, input: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut prev = input;
        let mut blocks = Vec::with_capacity(config.blocks);
        for (k, w) in config.widths(input).into_iter().enumerate() {
            let fc_name = format!("{name}.fc{k}");
            blocks.push(FcBlock {
                dense: if config.batch_norm {
                    Dense::linear(&fc_name, prev, w, rng)
                } else {
                    Dense::new(&fc_name, prev, w, rng)
                },
                bn: config.batch_norm.then(|| BatchNorm::new(&format!("{name}.fc{k}.bn"), w)),
            });
            prev = w;
        }
        let out = Dense::new(&format!("{name}.out"), prev, 2, rng);
        Ok(FcStack { config, blocks, out })
    }

    pub fn input_dim(&self) -> usize {
        self.blocks.first().map_or(self.out.input_dim(), |b| b.dense.input_dim())
    }

    /// Logits for a `batch × input` matrix. Training mode uses batch
    /// statistics in batch norm and, given `rng`, dropout.
    pub fn forward(&self, x: Vec<f64>, batch: usize, train: bool, mut rng: Option<&mut Rng>) -> (Vec<f64>, FcCache) {
        let mut cache = FcCache {
            batch,
            ..Default::default()
        };
        let mut h = x;
        let act = self.config.activation;
        for block in &self.blocks {
            let in_w = block.dense.input_dim();
            let pre: Vec<f64> = rows(&h, in_w).flat_map(|r| block.dense.forward(r)).collect();
            let (normed, bc) = match &block.bn {
                Some(bn) if train => {
                    let (y, c) = bn.forward_train(&pre, batch, 1, None);
                    (y, Some(c))
                }
                Some(bn) => (bn.forward_eval(&pre, batch, 1), None),
                None => (pre.clone(), None),
            };
            let a = act.apply_vec(&normed);
            let mask = match rng.as_deref_mut() {
                Some(r) if train && self.config.dropout > 0.0 => dropout_mask(a.len(), self.config.dropout, r),
                _ => Vec::new(),
            };
            let mut next = a.clone();
            if !mask.is_empty() {
                next.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
            }
            cache.inputs.push(core::mem::replace(&mut h, next));
            cache.pre.push(pre);
            cache.normed.push(normed);
            cache.bn.push(bc);
            cache.act.push(a);
            cache.masks.push(mask);
        }
        let logits: Vec<f64> = rows(&h, self.out.input_dim()).flat_map(|r| self.out.forward(r)).collect();
        cache.last = h;
        (logits, cache)
    }

    /// Backward from logit gradients; returns the input gradient matrix.
    pub fn backward(&self, cache: &FcCache, dlogits: &[f64], g: &mut FcStack) -> Vec<f64> {
        let in_w = self.out.input_dim();
        let mut d: Vec<f64> = rows(&cache.last, in_w)
            .zip(dlogits.chunks(2))
            .flat_map(|(x, dy)| self.out.backward(x, dy, &mut g.out))
            .collect();
        if cache.batch == 0 {
            return d;
        }
        let act = self.config.activation;
        for k in (0..self.blocks.len()).rev() {
            let block = &self.blocks[k];
            let gb = &mut g.blocks[k];
            if !cache.masks[k].is_empty() {
                d.iter_mut().zip(&cache.masks[k]).for_each(|(v, m)| *v *= m);
            }
            let dn = act.backward(&cache.normed[k], &cache.act[k], &d);
            let dpre = match (&block.bn, &cache.bn[k], gb.bn.as_mut()) {
                (Some(bn), Some(bc), Some(gbn)) => bn.backward(bc, &dn, gbn),
                _ => dn,
            };
            let width = block.dense.output_dim();
            let iw = block.dense.input_dim();
            d = rows(&cache.inputs[k], iw)
                .zip(rows(&dpre, width))
                .flat_map(|(x, dy)| block.dense.backward(x, dy, &mut gb.dense))
                .collect();
        }
        d
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for b in &self.blocks {
            v.extend(b.dense.params());
            if let Some(bn) = &b.bn {
                v.extend(bn.params());
            }
        }
        v.extend(self.out.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for b in &mut self.blocks {
            v.extend(b.dense.params_mut());
            if let Some(bn) = &mut b.bn {
                v.extend(bn.params_mut());
            }
        }
        v.extend(self.out.params_mut());
        v
    }
}

/// Mean class-weighted cross-entropy of `batch × 2` logits and its gradient.
pub fn weighted_softmax_loss(logits: &[f64], labels: &[usize], class_weights: [f64; 2]) -> Result<(f64, Vec<f64>)> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::Empty("batch".into()));
    }
    let mut loss = 0.0;
    let mut d = vec![0.0; 2 * n];
    for (i, (z, &y)) in logits.chunks(2).zip(labels).enumerate() {
        let p = softmax(z);
        let w = class_weights[y] / n as f64;
        loss += w * -p[y].max(f64::MIN_POSITIVE).ln();
        d[2 * i] = w * p[0];
        d[2 * i + 1] = w * p[1];
        d[2 * i + y] -= w;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok((loss, d))
}

/// Probability of class 1 from `batch × 2` logits.
pub fn positive_probs(logits: &[f64]) -> Vec<f64> {
    logits.chunks(2).map(|z| softmax(z)[1]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_shrink_by_divisor() {
        let c = FcConfig {
            blocks: 3,
            divisor: 3,
            ..Default::default()
        };
        assert_eq!(c.widths(100), vec![33, 11, 3]);
        assert_eq!(c.widths(2), vec![1, 1, 1]);
    }

    #[test]
    fn weighted_loss_example() {
        let (l, d) = weighted_softmax_loss(&[0.0, 0.0, 0.0, 0.0], &[0, 1], [1.0, 3.0]).unwrap();
        assert!((l - 2.0 * core::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(d, vec![-0.25, 0.25, 0.75, -0.75]);
    }
}
