use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use crate::math::Float;
use crate::numerics::{Param, Role};

/// Batch normalization over `C` channels. Activations are laid out as
/// `(batch, channel, position)`; statistics pool the batch and position axes,
/// optionally restricted by a `(batch, position)` validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    batch: usize,
    positions: usize,
    mask: Option<Vec<bool>>,
}

impl BatchNorm {
    pub fn new(name: &str, channels: usize) -> Self {
        let mut gamma = Param::zeros(format!("{name}.gamma"), Role::Bias, channels, 1);
        gamma.value.fill(1.0);
        let mut running_var = Param::zeros(format!("{name}.running_var"), Role::Buffer, channels, 1);
        running_var.value.fill(1.0);
        BatchNorm {
            gamma,
            beta: Param::zeros(format!("{name}.beta"), Role::Bias, channels, 1),
            running_mean: Param::zeros(format!("{name}.running_mean"), Role::Buffer, channels, 1),
            running_var,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.rows
    }

    #[inline]
    fn idx(&self, b: usize, c: usize, s: usize, positions: usize) -> usize {
        (b * self.channels() + c) * positions + s
    }

    pub fn forward_train(&self, x: &[f64], batch: usize, positions: usize, mask: Option<&[bool]>) -> (Vec<f64>, BnCache) {
        let ch = self.channels();
        debug_assert_eq!(x.len(), batch * ch * positions);
        let valid = |b: usize, s: usize| mask.is_none_or(|m| m[b * positions + s]);
        let mut mean = vec![0.0; ch];
        let mut var = vec![0.0; ch];
        let mut inv_std = vec![0.0; ch];
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        for c in 0..ch {
            let mut n = 0usize;
            let mut sum = 0.0;
            for b in 0..batch {
                for s in 0..positions {
                    if valid(b, s) {
                        sum += x[self.idx(b, c, s, positions)];
                        n += 1;
                    }
                }
            }
            let m = if n > 0 { sum / n as f64 } else { 0.0 };
            let mut ss = 0.0;
            for b in 0..batch {
                for s in 0..positions {
                    if valid(b, s) {
                        let d = x[self.idx(b, c, s, positions)] - m;
                        ss += d * d;
                    }
                }
            }
            let v = if n > 0 { ss / n as f64 } else { 0.0 };
            let is = 1.0 / (v + self.eps).sqrt();
            mean[c] = m;
            var[c] = if n > 1 { ss / (n - 1) as f64 } else { v };
            inv_std[c] = is;
            let (g, be) = (self.gamma.value.data[c], self.beta.value.data[c]);
            for b in 0..batch {
                for s in 0..positions {
                    let i = self.idx(b, c, s, positions);
                    if valid(b, s) {
                        xhat[i] = (x[i] - m) * is;
                        y[i] = g * xhat[i] + be;
                    }
                }
            }
        }
        (
            y,
            BnCache {
                xhat,
                inv_std,
                mean,
                var,
                batch,
                positions,
                mask: mask.map(|m| m.to_vec()),
            },
        )
    }

    pub fn forward_eval(&self, x: &[f64], batch: usize, positions: usize) -> Vec<f64> {
        let ch = self.channels();
        let mut y = vec![0.0; x.len()];
        for c in 0..ch {
            let is = 1.0 / (self.running_var.value.data[c] + self.eps).sqrt();
            let m = self.running_mean.value.data[c];
            let (g, be) = (self.gamma.value.data[c], self.beta.value.data[c]);
            for b in 0..batch {
                for s in 0..positions {
                    let i = self.idx(b, c, s, positions);
                    y[i] = g * (x[i] - m) * is + be;
                }
            }
        }
        y
    }

    /// Backward through the training-mode transform. The buffer slots of `g`
    /// receive this batch's mean and (unbiased) variance.
    pub fn backward(&self, cache: &BnCache, dy: &[f64], g: &mut BatchNorm) -> Vec<f64> {
        let ch = self.channels();
        let (batch, positions) = (cache.batch, cache.positions);
        let valid = |b: usize, s: usize| cache.mask.as_ref().is_none_or(|m| m[b * positions + s]);
        let mut dx = vec![0.0; dy.len()];
        for c in 0..ch {
            let gamma = self.gamma.value.data[c];
            let mut n = 0usize;
            let (mut sum_dxh, mut sum_dxh_xh, mut dgamma, mut dbeta) = (0.0, 0.0, 0.0, 0.0);
            for b in 0..batch {
                for s in 0..positions {
                    if valid(b, s) {
                        let i = self.idx(b, c, s, positions);
                        let dxh = dy[i] * gamma;
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * cache.xhat[i];
                        dgamma += dy[i] * cache.xhat[i];
                        dbeta += dy[i];
                        n += 1;
                    }
                }
            }
            g.gamma.value.data[c] += dgamma;
            g.beta.value.data[c] += dbeta;
            g.running_mean.value.data[c] = cache.mean[c];
            g.running_var.value.data[c] = cache.var[c];
            if n == 0 {
                continue;
            }
            let nf = n as f64;
            let k = cache.inv_std[c] / nf;
            for b in 0..batch {
                for s in 0..positions {
                    if valid(b, s) {
                        let i = self.idx(b, c, s, positions);
                        let dxh = dy[i] * gamma;
                        dx[i] = k * (nf * dxh - sum_dxh - cache.xhat[i] * sum_dxh_xh);
                    }
                }
            }
        }
        dx
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }
}
