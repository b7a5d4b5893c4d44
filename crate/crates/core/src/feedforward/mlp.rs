use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::fc::{positive_probs, weighted_softmax_loss, FcConfig, FcStack};
use crate::error::{Error, Result};
use crate::featurizer::Example;
use crate::model::{ForwardCtx, SequenceModel};
use crate::numerics::{Param, Parameters};
use crate::rng::Rng;

/// Multilayer perceptron on the final event vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub fc: FcStack,
}

pub(crate) fn last_events(batch: &[&Example], dim: usize) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(batch.len() * dim);
    for ex in batch {
        if ex.is_empty() {
            return Err(Error::Empty("timeline".into()));
        }
        if ex.dim() != dim {
            return Err(Error::Shape {
                expected: dim,
                got: ex.dim(),
            });
        }
        x.extend_from_slice(ex.last_event());
    }
    Ok(x)
}

pub(crate) fn labels(batch: &[&Example]) -> Vec<usize> {
    batch.iter().map(|e| usize::from(e.label() != 0)).collect()
}

impl MlpModel {
    pub fn new(config: FcConfig, input_dim: usize, rng: &mut Rng) -> Result<Self> {
        Ok(MlpModel {
            fc: FcStack::new("mlp", config, input_dim, rng)?,
        })
    }
}

impl Parameters for MlpModel {
    fn params(&self) -> Vec<&Param> {
        self.fc.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.fc.params_mut()
    }
}

impl SequenceModel for MlpModel {
    fn batch_loss(&self, batch: &[&Example], ctx: &mut ForwardCtx) -> Result<(f64, Self)> {
        let x = last_events(batch, self.fc.input_dim())?;
        let (logits, cache) = self.fc.forward(x, batch.len(), true, ctx.rng.as_mut());
        let (loss, dlogits) = weighted_softmax_loss(&logits, &labels(batch), ctx.class_weights)?;
        let mut g = self.zeros_like();
        self.fc.backward(&cache, &dlogits, &mut g.fc);
        Ok((loss, g))
    }

    fn predict(&self, ex: &Example) -> f64 {
        self.predict_all(&[ex])[0]
    }

    fn predict_all(&self, exs: &[&Example]) -> Vec<f64> {
        match last_events(exs, self.fc.input_dim()) {
            Ok(x) => positive_probs(&self.fc.forward(x, exs.len(), false, None).0),
            Err(_) => exs.iter().map(|_| f64::NAN).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, Activation};
    use crate::rng::rng_from;
    use alloc::string::String;
    use alloc::vec;
    use rand::Rng as _;

    pub(crate) fn batch(n: usize, d: usize, seed: u64) -> Vec<Example> {
        let mut rng = rng_from(seed);
        (0..n)
            .map(|i| Example {
                id: String::from("p"),
                events: vec![(0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()],
                targets: vec![(i % 2) as u8],
                index_mask: vec![true],
            })
            .collect()
    }

    #[test]
    fn zero_weights_without_batch_norm_are_uninformed() {
        let cfg = FcConfig {
            batch_norm: false,
            ..Default::default()
        };
        let mut m = MlpModel::new(cfg, 7, &mut rng_from(1)).unwrap();
        for p in m.params_mut() {
            p.value.fill(0.0);
        }
        let exs = batch(3, 7, 2);
        let refs: Vec<&Example> = exs.iter().collect();
        assert!(m.predict_all(&refs).iter().all(|p| *p == 0.5));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let exs = batch(6, 7, 3);
        let refs: Vec<&Example> = exs.iter().collect();
        for (bn, act) in [(true, Activation::Relu), (true, Activation::Tanh), (false, Activation::Tanh)] {
            let cfg = FcConfig {
                blocks: 2,
                divisor: 2,
                batch_norm: bn,
                activation: act,
                dropout: 0.0,
            };
            let m = MlpModel::new(cfg, 7, &mut rng_from(4)).unwrap();
            let cw = [0.6, 1.7];
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
            assert!(err < 1e-4, "bn {bn}: {err}");
        }
    }

    #[test]
    fn gradient_carries_batch_statistics() {
        let exs = batch(4, 5, 5);
        let refs: Vec<&Example> = exs.iter().collect();
        let m = MlpModel::new(FcConfig::default(), 5, &mut rng_from(6)).unwrap();
        let (_, g) = m.batch_loss(&refs, &mut ForwardCtx::deterministic([1.0, 1.0])).unwrap();
        let bn = g.fc.blocks[0].bn.as_ref().unwrap();
        assert!(bn.running_var.value.data.iter().any(|v| *v != 0.0));
    }
}
