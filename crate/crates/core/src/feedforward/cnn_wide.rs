use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::conv::Pool;
use super::fc::{positive_probs, weighted_softmax_loss, FcCache, FcConfig, FcStack};
use super::mlp::labels;
use super::recent_events;
#[allow(unused_imports)]
use crate::math::Float;
use crate::error::{Error, Result};
use crate::featurizer::Example;
use crate::layers::{BatchNorm, BnCache};
use crate::model::{ForwardCtx, SequenceModel};
use crate::numerics::{dropout_mask, Activation, Param, Parameters, Role};
use crate::rng::Rng;

/// Convolutions whose kernels span `w` consecutive events and the full
/// feature width, pooled over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnWideConfig {
    /// Kernel heights in events, one kernel bank per entry.
    pub widths: Vec<usize>,
    /// Kernels per bank.
    pub kernels: usize,
    pub batch_norm: bool,
    pub activation: Activation,
    pub pool: Pool,
    /// Zero-pad the end of the timeline so every bank yields `T_max`
    /// positions.
    pub padding: bool,
    /// Dropout on the pooled features.
    pub dropout: f64,
    pub fc: FcConfig,
}

impl Default for CnnWideConfig {
    fn default() -> Self {
        CnnWideConfig {
            widths: vec![2, 3],
            kernels: 32,
            batch_norm: true,
            activation: Activation::Tanh,
            pool: Pool::Max,
            padding: false,
            dropout: 0.0,
            fc: FcConfig {
                blocks: 1,
                divisor: 2,
                ..Default::default()
            },
        }
    }
}

impl CnnWideConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::config("widths", "need at least one positive kernel width"));
        }
        if self.kernels == 0 {
            return Err(Error::config("kernels", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", format!("{} is outside [0, 1)", self.dropout)));
        }
        self.fc.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBank {
    pub width: usize,
    /// `kernels × (width·d)`, row-major by event offset then feature.
    pub w: Param,
    pub b: Param,
    pub bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnWideModel {
    pub config: CnnWideConfig,
    pub max_len: usize,
    pub input_dim: usize,
    pub banks: Vec<KernelBank>,
    pub fc: FcStack,
}

struct BankCache {
    positions: usize,
    valid: Vec<bool>,
    normed: Vec<f64>,
    bn: Option<BnCache>,
    act: Vec<f64>,
    arg: Vec<usize>,
    counts: Vec<usize>,
}

struct WideCache {
    rows: Vec<Vec<Vec<(usize, f64)>>>,
    banks: Vec<BankCache>,
    mask: Vec<f64>,
    fc: FcCache,
}

impl CnnWideModel {
    pub fn new(config: CnnWideConfig, input_dim: usize, max_len: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let widest = config.widths.iter().copied().max().unwrap_or(0);
        if max_len < widest {
            return Err(Error::config(
                "widths",
                format!("kernel width {widest} exceeds the longest timeline ({max_len} events)"),
            ));
        }
        let k = config.kernels;
        let banks = config
            .widths
            .iter()
            .map(|&width| {
                let fan = width * input_dim;
                let a = (6.0 / (fan + k) as f64).sqrt();
                let mut w = Param::zeros(format!("wide.w{width}"), Role::Weight, k, fan);
                w.value.data.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
                KernelBank {
                    width,
                    w,
                    b: Param::zeros(format!("wide.b{width}"), Role::Bias, if config.batch_norm { 0 } else { k }, 1),
                    bn: config.batch_norm.then(|| BatchNorm::new(&format!("wide.bn{width}"), k)),
                }
            })
            .collect();
        let fc = FcStack::new("wide", config.fc, k * config.widths.len(), rng)?;
        Ok(CnnWideModel {
            config,
            max_len,
            input_dim,
            banks,
            fc,
        })
    }

    /// Length of each kernel's feature map.
    pub fn map_len(&self, width: usize) -> usize {
        if self.config.padding {
            self.max_len
        } else {
            self.max_len + 1 - width
        }
    }

    fn run(&self, batch: &[&Example], train: bool, mut rng: Option<&mut Rng>) -> Result<(Vec<f64>, WideCache)> {
        let n = batch.len();
        let d = self.input_dim;
        let k = self.config.kernels;
        let mut rows = Vec::with_capacity(n);
        for ex in batch {
            let events = recent_events(ex, self.max_len, d)?;
            rows.push(
                events
                    .iter()
                    .map(|e| e.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect())
                    .collect::<Vec<Vec<(usize, f64)>>>(),
            );
        }
        let nb = self.banks.len();
        let mut pooled = vec![0.0; n * k * nb];
        let mut caches = Vec::with_capacity(nb);
        let act = self.config.activation;
        for (bi, bank) in self.banks.iter().enumerate() {
            let len = self.map_len(bank.width);
            let mut pre = vec![0.0; n * k * len];
            let mut valid = vec![false; n * len];
            for (b, ex_rows) in rows.iter().enumerate() {
                let valid_len = ex_rows.len().min(len);
                for p in 0..valid_len {
                    valid[b * len + p] = true;
                    for (kk, bias) in bank.b.value.data.iter().enumerate() {
                        pre[(b * k + kk) * len + p] = *bias;
                    }
                }
                for (r, row) in ex_rows.iter().enumerate() {
                    for off in 0..bank.width.min(r + 1) {
                        let p = r - off;
                        if p >= len {
                            continue;
                        }
                        for kk in 0..k {
                            let wrow = bank.w.value.row(kk);
                            let s: f64 = row.iter().map(|(j, v)| wrow[off * d + j] * v).sum();
                            pre[(b * k + kk) * len + p] += s;
                        }
                    }
                }
            }
            let (normed, bn) = match &bank.bn {
                Some(bn) if train => {
                    let (y, c) = bn.forward_train(&pre, n, len, Some(&valid));
                    (y, Some(c))
                }
                Some(bn) => (bn.forward_eval(&pre, n, len), None),
                None => (pre, None),
            };
            let a = act.apply_vec(&normed);
            let mut arg = vec![0usize; n * k];
            let mut counts = vec![0usize; n];
            for b in 0..n {
                let nv = (0..len).filter(|p| valid[b * len + p]).count();
                counts[b] = nv;
                for kk in 0..k {
                    let base = (b * k + kk) * len;
                    let out = &mut pooled[b * k * nb + bi * k + kk];
                    match self.config.pool {
                        Pool::Max => {
                            let mut best = 0;
                            for p in 1..nv {
                                if a[base + p] > a[base + best] {
                                    best = p;
                                }
                            }
                            arg[b * k + kk] = best;
                            *out = a[base + best];
                        }
                        Pool::Avg => *out = a[base..base + nv].iter().sum::<f64>() / nv as f64,
                    }
                }
            }
            caches.push(BankCache {
                positions: len,
                valid,
                normed,
                bn,
                act: a,
                arg,
                counts,
            });
        }
        let mask = match rng.as_deref_mut() {
            Some(r) if train && self.config.dropout > 0.0 => dropout_mask(pooled.len(), self.config.dropout, r),
            _ => Vec::new(),
        };
        pooled.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        let (logits, fc) = self.fc.forward(pooled, n, train, rng);
        Ok((
            logits,
            WideCache {
                rows,
                banks: caches,
                mask,
                fc,
            },
        ))
    }
}

impl Parameters for CnnWideModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for b in &self.banks {
            v.push(&b.w);
            v.push(&b.b);
            if let Some(bn) = &b.bn {
                v.extend(bn.params());
            }
        }
        v.extend(self.fc.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for b in &mut self.banks {
            v.push(&mut b.w);
            v.push(&mut b.b);
            if let Some(bn) = &mut b.bn {
                v.extend(bn.params_mut());
            }
        }
        v.extend(self.fc.params_mut());
        v
    }
}

impl SequenceModel for CnnWideModel {
    fn batch_loss(&self, batch: &[&Example], ctx: &mut ForwardCtx) -> Result<(f64, Self)> {
        let (logits, cache) = self.run(batch, true, ctx.rng.as_mut())?;
        let (loss, dlogits) = weighted_softmax_loss(&logits, &labels(batch), ctx.class_weights)?;
        let mut g = self.zeros_like();
        let mut dpooled = self.fc.backward(&cache.fc, &dlogits, &mut g.fc);
        dpooled.iter_mut().zip(&cache.mask).for_each(|(v, m)| *v *= m);
        let n = batch.len();
        let k = self.config.kernels;
        let d = self.input_dim;
        let nb = self.banks.len();
        let act = self.config.activation;
        for (bi, (bank, bc)) in self.banks.iter().zip(&cache.banks).enumerate() {
            let len = bc.positions;
            let gb = &mut g.banks[bi];
            let mut dact = vec![0.0; n * k * len];
            for b in 0..n {
                for kk in 0..k {
                    let dv = dpooled[b * k * nb + bi * k + kk];
                    let base = (b * k + kk) * len;
                    match self.config.pool {
                        Pool::Max => dact[base + bc.arg[b * k + kk]] = dv,
                        Pool::Avg => {
                            let nv = bc.counts[b];
                            for p in 0..nv {
                                dact[base + p] = dv / nv as f64;
                            }
                        }
                    }
                }
            }
            let mut dn = act.backward(&bc.normed, &bc.act, &dact);
            for b in 0..n {
                for kk in 0..k {
                    for p in 0..len {
                        if !bc.valid[b * len + p] {
                            dn[(b * k + kk) * len + p] = 0.0;
                        }
                    }
                }
            }
            let dpre = match (&bank.bn, &bc.bn, gb.bn.as_mut()) {
                (Some(bn), Some(c), Some(gbn)) => bn.backward(c, &dn, gbn),
                _ => dn,
            };
            for (b, ex_rows) in cache.rows.iter().enumerate() {
                for kk in 0..k {
                    let base = (b * k + kk) * len;
                    if let Some(db) = gb.b.value.data.get_mut(kk) {
                        *db += (0..bc.counts[b]).map(|p| dpre[base + p]).sum::<f64>();
                    }
                    let grow = gb.w.value.row_mut(kk);
                    for (r, row) in ex_rows.iter().enumerate() {
                        for off in 0..bank.width.min(r + 1) {
                            let p = r - off;
                            if p >= len {
                                continue;
                            }
                            let dp = dpre[base + p];
                            if dp == 0.0 {
                                continue;
                            }
                            for (j, v) in row {
                                grow[off * d + j] += dp * v;
                            }
                        }
                    }
                }
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

    fn small(bn: bool, pool: Pool, padding: bool) -> CnnWideConfig {
        CnnWideConfig {
            widths: vec![2, 3],
            kernels: 3,
            batch_norm: bn,
            activation: Activation::Tanh,
            pool,
            padding,
            dropout: 0.0,
            fc: FcConfig {
                blocks: 1,
                divisor: 2,
                batch_norm: bn,
                activation: Activation::Tanh,
                dropout: 0.0,
            },
        }
    }

    #[test]
    fn shapes() {
        let cfg = CnnWideConfig {
            widths: vec![2],
            kernels: 32,
            ..Default::default()
        };
        let m = CnnWideModel::new(cfg, 7, 5, &mut rng_from(1)).unwrap();
        assert_eq!(m.map_len(2), 4);
        let m = CnnWideModel::new(CnnWideConfig::default(), 7, 5, &mut rng_from(1)).unwrap();
        assert_eq!(m.fc.input_dim(), 64);
        assert!(CnnWideModel::new(CnnWideConfig::default(), 7, 2, &mut rng_from(1)).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let exs = examples(6, 7, 2);
        let refs: Vec<&Example> = exs.iter().collect();
        for (bn, pool, padding) in [(true, Pool::Max, false), (false, Pool::Avg, true), (true, Pool::Avg, false)] {
            let m = CnnWideModel::new(small(bn, pool, padding), 7, 4, &mut rng_from(3)).unwrap();
            let cw = [0.9, 1.2];
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
            assert!(err < 1e-4, "{bn} {pool:?} {padding}: {err}");
        }
    }

    #[test]
    fn padding_rows_never_reach_the_output() {
        let m = CnnWideModel::new(small(true, Pool::Max, true), 7, 6, &mut rng_from(4)).unwrap();
        let exs = examples(2, 7, 5);
        let ex = &exs[1];
        let wider = CnnWideModel { max_len: 9, ..m.clone() };
        assert_eq!(m.predict(ex), wider.predict(ex));
    }
}
