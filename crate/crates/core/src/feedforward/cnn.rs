use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::conv::{Conv2d, Pool, Pool2d};
use super::fc::{positive_probs, weighted_softmax_loss, FcCache, FcConfig, FcStack};
use super::mlp::labels;
use super::padded_image;
use crate::error::{Error, Result};
use crate::featurizer::Example;
use crate::layers::{BatchNorm, BnCache};
use crate::model::{ForwardCtx, SequenceModel};
use crate::numerics::{dropout_mask, Activation, Param, Parameters};
use crate::rng::Rng;

/// Convolutional network over the padded `T_max × d` timeline image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    /// Square kernel size (odd).
    pub kernel: usize,
    /// Channels of the first block; each later block doubles them.
    pub start_channels: usize,
    /// Upper bound on channels per block.
    pub max_channels: usize,
    /// Convolutions per block.
    pub convs_per_block: usize,
    /// Number of blocks, each ending in a pooling step.
    pub repeats: usize,
    pub batch_norm: bool,
    pub activation: Activation,
    pub pool: Pool,
    /// Dropout after each block's pooling.
    pub dropout: f64,
    pub fc: FcConfig,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            kernel: 3,
            start_channels: 4,
            max_channels: 16,
            convs_per_block: 1,
            repeats: 2,
            batch_norm: true,
            activation: Activation::Relu,
            pool: Pool::Max,
            dropout: 0.0,
            fc: FcConfig {
                blocks: 1,
                divisor: 4,
                ..Default::default()
            },
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::config("kernel", format!("{} must be a positive odd size", self.kernel)));
        }
        if self.start_channels == 0 || self.max_channels == 0 {
            return Err(Error::config("start_channels", "channel counts must be positive"));
        }
        if self.convs_per_block == 0 || self.repeats == 0 {
            return Err(Error::config("repeats", "need at least one block of one convolution"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", format!("{} is outside [0, 1)", self.dropout)));
        }
        self.fc.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvUnit {
    pub conv: Conv2d,
    pub bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    pub config: CnnConfig,
    pub max_len: usize,
    pub input_dim: usize,
    pub units: Vec<ConvUnit>,
    pub fc: FcStack,
}

struct UnitCache {
    input: Vec<f64>,
    normed: Vec<f64>,
    bn: Option<BnCache>,
    act: Vec<f64>,
    h: usize,
    w: usize,
}

struct PoolCache {
    pool: Pool2d,
    arg: Vec<Vec<usize>>,
    mask: Vec<f64>,
}

struct CnnCache {
    units: Vec<UnitCache>,
    pools: Vec<PoolCache>,
    fc: FcCache,
}

impl CnnModel {
    pub fn new(config: CnnConfig, input_dim: usize, max_len: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        if max_len == 0 || input_dim == 0 {
            return Err(Error::config("max_len", "image dimensions must be positive"));
        }
        let (mut c, mut h, mut w) = (1usize, max_len, input_dim);
        let mut units = Vec::new();
        for j in 0..config.repeats {
            let out = (config.start_channels << j.min(20)).min(config.max_channels);
            for i in 0..config.convs_per_block {
                units.push(ConvUnit {
                    conv: Conv2d::new(&format!("cnn.b{j}.c{i}"), c, out, config.kernel, !config.batch_norm, rng),
                    bn: config.batch_norm.then(|| BatchNorm::new(&format!("cnn.b{j}.c{i}.bn"), out)),
                });
                c = out;
            }
            let p = Pool2d {
                kind: config.pool,
                c,
                h,
                w,
            };
            (h, w) = p.out_shape();
        }
        let fc = FcStack::new("cnn", config.fc, c * h * w, rng)?;
        Ok(CnnModel {
            config,
            max_len,
            input_dim,
            units,
            fc,
        })
    }

    fn run(&self, batch: &[&Example], train: bool, mut rng: Option<&mut Rng>) -> Result<(Vec<f64>, CnnCache)> {
        let n = batch.len();
        let mut cur = Vec::with_capacity(n * self.max_len * self.input_dim);
        for ex in batch {
            cur.extend(padded_image(ex, self.max_len, self.input_dim)?.0);
        }
        let (mut c, mut h, mut w) = (1usize, self.max_len, self.input_dim);
        let mut units = Vec::with_capacity(self.units.len());
        let mut pools = Vec::with_capacity(self.config.repeats);
        let act = self.config.activation;
        for block in self.units.chunks(self.config.convs_per_block) {
            for unit in block {
                let co = unit.conv.c_out;
                let pre: Vec<f64> = cur.chunks(c * h * w).flat_map(|x| unit.conv.forward(x, h, w)).collect();
                let (normed, bn) = match &unit.bn {
                    Some(bn) if train => {
                        let (y, cache) = bn.forward_train(&pre, n, h * w, None);
                        (y, Some(cache))
                    }
                    Some(bn) => (bn.forward_eval(&pre, n, h * w), None),
                    None => (pre, None),
                };
                let a = act.apply_vec(&normed);
                units.push(UnitCache {
                    input: core::mem::replace(&mut cur, a.clone()),
                    normed,
                    bn,
                    act: a,
                    h,
                    w,
                });
                c = co;
            }
            let pool = Pool2d {
                kind: self.config.pool,
                c,
                h,
                w,
            };
            let mut next = Vec::new();
            let mut arg = Vec::with_capacity(n);
            for x in cur.chunks(c * h * w) {
                let (y, a) = pool.forward(x);
                next.extend(y);
                arg.push(a);
            }
            (h, w) = pool.out_shape();
            let mask = match rng.as_deref_mut() {
                Some(r) if train && self.config.dropout > 0.0 => dropout_mask(next.len(), self.config.dropout, r),
                _ => Vec::new(),
            };
            next.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
            pools.push(PoolCache { pool, arg, mask });
            cur = next;
        }
        let (logits, fc) = self.fc.forward(cur, n, train, rng);
        Ok((logits, CnnCache { units, pools, fc }))
    }
}

impl Parameters for CnnModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for u in &self.units {
            v.extend(u.conv.params());
            if let Some(bn) = &u.bn {
                v.extend(bn.params());
            }
        }
        v.extend(self.fc.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for u in &mut self.units {
            v.extend(u.conv.params_mut());
            if let Some(bn) = &mut u.bn {
                v.extend(bn.params_mut());
            }
        }
        v.extend(self.fc.params_mut());
        v
    }
}

impl SequenceModel for CnnModel {
    fn batch_loss(&self, batch: &[&Example], ctx: &mut ForwardCtx) -> Result<(f64, Self)> {
        let (logits, cache) = self.run(batch, true, ctx.rng.as_mut())?;
        let (loss, dlogits) = weighted_softmax_loss(&logits, &labels(batch), ctx.class_weights)?;
        let mut g = self.zeros_like();
        let mut d = self.fc.backward(&cache.fc, &dlogits, &mut g.fc);
        let act = self.config.activation;
        let per_block = self.config.convs_per_block;
        for (j, pc) in cache.pools.iter().enumerate().rev() {
            d.iter_mut().zip(&pc.mask).for_each(|(v, m)| *v *= m);
            let (oh, ow) = pc.pool.out_shape();
            let out_len = pc.pool.c * oh * ow;
            d = pc
                .arg
                .iter()
                .zip(d.chunks(out_len))
                .flat_map(|(a, dy)| pc.pool.backward(a, dy))
                .collect();
            for i in (0..per_block).rev() {
                let k = j * per_block + i;
                let (unit, uc) = (&self.units[k], &cache.units[k]);
                let gu = &mut g.units[k];
                let dn = act.backward(&uc.normed, &uc.act, &d);
                let dpre = match (&unit.bn, &uc.bn, gu.bn.as_mut()) {
                    (Some(bn), Some(bc), Some(gbn)) => bn.backward(bc, &dn, gbn),
                    _ => dn,
                };
                let need_dx = k > 0;
                let (h, w) = (uc.h, uc.w);
                let in_len = unit.conv.c_in * h * w;
                let out_len = unit.conv.c_out * h * w;
                let mut dx = Vec::new();
                for (x, dy) in uc.input.chunks(in_len).zip(dpre.chunks(out_len)) {
                    if let Some(v) = unit.conv.backward(x, h, w, dy, &mut gu.conv, need_dx) {
                        dx.extend(v);
                    }
                }
                d = dx;
            }
        }
        Ok((loss, g))
    }

    fn predict(&self, ex: &Example) -> f64 {
        self.predict_all(&[ex])[0]
    }

    fn predict_all(&self, exs: &[&Example]) -> Vec<f64> {
        let mut out = Vec::with_capacity(exs.len());
        for chunk in exs.chunks(256) {
            match self.run(chunk, false, None) {
                Ok((logits, _)) => out.extend(positive_probs(&logits)),
                Err(_) => out.extend(chunk.iter().map(|_| f64::NAN)),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use crate::rng::rng_from;
    use alloc::string::String;
    use alloc::vec;
    use rand::Rng as _;

    fn examples(n: usize, d: usize, seed: u64) -> Vec<Example> {
        let mut rng = rng_from(seed);
        (0..n)
            .map(|i| {
                let t = 1 + i % 4;
                Example {
                    id: String::from("p"),
                    events: (0..t)
                        .map(|_| (0..d).map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>() * 2.0 - 1.0 }).collect())
                        .collect(),
                    targets: (0..t).map(|_| (i % 2) as u8).collect(),
                    index_mask: vec![true; t],
                }
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let exs = examples(5, 7, 1);
        let refs: Vec<&Example> = exs.iter().collect();
        for (bn, pool, act) in [
            (true, Pool::Max, Activation::Tanh),
            (false, Pool::Avg, Activation::Tanh),
            (true, Pool::Avg, Activation::Relu),
        ] {
            let cfg = CnnConfig {
                start_channels: 2,
                max_channels: 3,
                convs_per_block: 2,
                repeats: 2,
                batch_norm: bn,
                activation: act,
                pool,
                fc: FcConfig {
                    blocks: 1,
                    divisor: 2,
                    batch_norm: false,
                    activation: Activation::Tanh,
                    dropout: 0.0,
                },
                ..Default::default()
            };
            let m = CnnModel::new(cfg, 7, 4, &mut rng_from(2)).unwrap();
            let cw = [0.8, 1.3];
            let (_, g) = m.batch_loss(&refs, &mut ForwardCtx::deterministic(cw)).unwrap();
            let mut probe = m.clone();
            let err = grad_check(
                |th| {
                    probe.set_flat_trainable(th);
                    probe.batch_loss(&refs, &mut ForwardCtx::deterministic(cw)).unwrap().0
                },
                &g.flat_trainable(),
                &m.flat_trainable(),
                1e-5,
            );
            assert!(err < 1e-4, "{bn} {pool:?}: {err}");
        }
    }

    #[test]
    fn pooling_stops_at_unit_extent() {
        let cfg = CnnConfig {
            repeats: 4,
            ..Default::default()
        };
        let m = CnnModel::new(cfg, 10, 3, &mut rng_from(3)).unwrap();
        assert_eq!(m.fc.input_dim(), 16);
    }

    #[test]
    fn long_timelines_keep_most_recent_events() {
        let m = CnnModel::new(CnnConfig::default(), 7, 2, &mut rng_from(4)).unwrap();
        let exs = examples(4, 7, 5);
        let mut long = exs[3].clone();
        let recent = Example {
            events: long.events[2..].to_vec(),
            targets: long.targets[2..].to_vec(),
            index_mask: long.index_mask[2..].to_vec(),
            ..long.clone()
        };
        long.id = String::from("q");
        assert_eq!(m.predict(&long), m.predict(&recent));
    }
}
