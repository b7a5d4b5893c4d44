use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{loss_weights, RecurrentConfig, RecurrentStack, StackCache};
use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;
use crate::featurizer::Example;
use crate::layers::Dense;
use crate::model::{mean_over_batch, ForwardCtx, SequenceModel};
use crate::numerics::{softmax, Param, Parameters};
use crate::rng::Rng;

/// Recurrent labeler emitting a readmission probability at every event.
/// With scheduled sampling the previous event's label, one-hot encoded, is
/// appended to each input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentModel {
    pub config: RecurrentConfig,
    pub stack: RecurrentStack,
    pub out: Dense,
}

struct Pass {
    cache: StackCache,
    probs: Vec<Vec<f64>>,
}

fn argmax_label(p: &[f64]) -> usize {
    usize::from(p[1] > p[0])
}

impl RecurrentModel {
    pub fn new(config: RecurrentConfig, input_dim: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let extra = if config.scheduled_sampling() { 2 } else { 0 };
        let stack = RecurrentStack::new("rnn", config.stack, input_dim + extra, rng)?;
        let out = Dense::new("rnn.out", stack.output_dim(), 2, rng);
        Ok(RecurrentModel { config, stack, out })
    }

    pub fn input_dim(&self) -> usize {
        self.stack.input_dim - if self.config.scheduled_sampling() { 2 } else { 0 }
    }

    /// Label fed back as input at step `t` (t ≥ 1).
    fn feedback(&self, ex: &Example, t: usize, prev: &[f64], ctx: Option<&mut ForwardCtx>) -> usize {
        let truth = usize::from(ex.targets[t - 1] != 0);
        match ctx {
            None => argmax_label(prev),
            Some(ctx) if ctx.teacher_prob >= 1.0 => truth,
            Some(ctx) => match ctx.rng.as_mut() {
                Some(r) => {
                    if r.random::<f64>() < ctx.teacher_prob {
                        truth
                    } else {
                        usize::from(r.random::<f64>() < prev[1])
                    }
                }
                None => argmax_label(prev),
            },
        }
    }

    fn run(&self, ex: &Example, mut ctx: Option<&mut ForwardCtx>) -> Result<Pass> {
        if ex.events.is_empty() {
            return Err(Error::Empty("timeline".into()));
        }
        if ex.dim() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: ex.dim(),
            });
        }
        let ss = self.config.scheduled_sampling();
        let mut cache = self.stack.cache();
        let mut probs: Vec<Vec<f64>> = Vec::with_capacity(ex.len());
        for t in 0..ex.len() {
            let mut x = ex.events[t].clone();
            if ss {
                let mut prev = [0.0; 2];
                if t > 0 {
                    prev[self.feedback(ex, t, &probs[t - 1], ctx.as_deref_mut())] = 1.0;
                }
                x.extend_from_slice(&prev);
            }
            let rng = ctx.as_deref_mut().and_then(|c| c.rng.as_mut());
            let z = self.stack.step(x, &mut cache, rng);
            probs.push(softmax(&self.out.forward(&z)));
        }
        Ok(Pass { cache, probs })
    }

    /// Readmission probability at every event, feeding back the model's own
    /// predictions under scheduled sampling.
    pub fn step_probs(&self, ex: &Example) -> Result<Vec<f64>> {
        Ok(self.run(ex, None)?.probs.iter().map(|p| p[1]).collect())
    }

    fn example_loss(&self, ex: &Example, ctx: &mut ForwardCtx, g: &mut RecurrentModel) -> Result<f64> {
        let c = loss_weights(self.config.loss, self.config.alpha, &ex.index_mask)?;
        let w = ctx.class_weights;
        let pass = self.run(ex, Some(ctx))?;
        let mut loss = 0.0;
        let mut dz = Vec::with_capacity(ex.len());
        for t in 0..ex.len() {
            let z = &pass.cache.z[t];
            if c[t] == 0.0 {
                dz.push(vec![0.0; z.len()]);
                continue;
            }
            let y = usize::from(ex.targets[t] != 0);
            let p = &pass.probs[t];
            let scale = c[t] * w[y];
            loss += scale * -p[y].max(f64::MIN_POSITIVE).ln();
            let mut dlogits = [scale * p[0], scale * p[1]];
            dlogits[y] -= scale;
            dz.push(self.out.backward(z, &dlogits, &mut g.out));
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("recurrent loss".into()));
        }
        self.stack.backward(&pass.cache, dz, &mut g.stack);
        Ok(loss)
    }
}

impl Parameters for RecurrentModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.stack.params();
        v.extend(self.out.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.stack.params_mut();
        v.extend(self.out.params_mut());
        v
    }
}

impl SequenceModel for RecurrentModel {
    fn batch_loss(&self, batch: &[&Example], ctx: &mut ForwardCtx) -> Result<(f64, Self)> {
        mean_over_batch(self, batch, |ex, g| self.example_loss(ex, ctx, g))
    }

    fn predict(&self, ex: &Example) -> f64 {
        self.run(ex, None)
            .ok()
            .and_then(|p| p.probs.last().map(|p| p[1]))
            .unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::CellKind;
    use crate::numerics::{grad_check, Activation};
    use crate::recurrent::{LossVariant, SamplingSchedule, StackConfig};
    use crate::rng::rng_from;
    use alloc::string::String;

    fn example(t: usize, d: usize, seed: u64) -> Example {
        let mut rng = rng_from(seed);
        let events = (0..t)
            .map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let targets = (0..t).map(|i| (i % 2) as u8).collect();
        let index_mask = (0..t).map(|i| i == t - 1 || i % 3 == 0).collect();
        Example {
            id: String::from("p"),
            events,
            targets,
            index_mask,
        }
    }

    fn config(cell: CellKind, loss: LossVariant) -> RecurrentConfig {
        RecurrentConfig {
            stack: StackConfig {
                cell,
                hidden: 4,
                layers: 1,
                input_embed: 3,
                output_embed: 0,
                activation: Activation::Tanh,
                dropout: 0.0,
            },
            loss,
            alpha: 0.7,
            schedule: SamplingSchedule::default(),
        }
    }

    fn check(model: &RecurrentModel, batch: &[&Example]) {
        let cw = [0.8, 1.3];
        let (_, g) = model.batch_loss(batch, &mut ForwardCtx::deterministic(cw)).unwrap();
        let theta = model.flat_trainable();
        let mut probe = model.clone();
        let err = grad_check(
            |th| {
                probe.set_flat_trainable(th);
                probe.batch_loss(batch, &mut ForwardCtx::deterministic(cw)).unwrap().0
            },
            &g.flat_trainable(),
            &theta,
            1e-5,
        );
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let a = example(4, 5, 1);
        let b = example(3, 5, 2);
        let batch = [&a, &b];
        for (i, cell) in [CellKind::Vanilla, CellKind::Lstm, CellKind::Gru].into_iter().enumerate() {
            for loss in LossVariant::ALL {
                let mut rng = rng_from(10 + i as u64);
                let m = RecurrentModel::new(config(cell, loss), 5, &mut rng).unwrap();
                check(&m, &batch);
            }
        }
    }

    #[test]
    fn deep_stack_gradients_match_in_norm() {
        let mut cfg = config(CellKind::Lstm, LossVariant::ConvexHfNonHf);
        cfg.stack.layers = 2;
        cfg.stack.output_embed = 3;
        let m = RecurrentModel::new(cfg, 5, &mut rng_from(21)).unwrap();
        let a = example(4, 5, 22);
        let cw = [1.0, 1.0];
        let (_, g) = m.batch_loss(&[&a], &mut ForwardCtx::deterministic(cw)).unwrap();
        let analytic = g.flat_trainable();
        let mut theta = m.flat_trainable();
        let mut probe = m.clone();
        let mut worst = 0.0f64;
        for i in 0..theta.len() {
            let o = theta[i];
            let mut eval = |v: f64| {
                theta[i] = v;
                probe.set_flat_trainable(&theta);
                probe.batch_loss(&[&a], &mut ForwardCtx::deterministic(cw)).unwrap().0
            };
            let n = (eval(o + 1e-5) - eval(o - 1e-5)) / 2e-5;
            theta[i] = o;
            worst = worst.max((analytic[i] - n).abs());
        }
        let scale = analytic.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(worst / scale < 1e-7, "{worst} vs {scale}");
    }

    #[test]
    fn scheduled_sampling_gradients_with_teacher_forcing() {
        let mut cfg = config(CellKind::Gru, LossVariant::ConvexHfLastHf);
        cfg.schedule = SamplingSchedule::exponential(0.9);
        let m = RecurrentModel::new(cfg, 5, &mut rng_from(3)).unwrap();
        let a = example(5, 5, 4);
        check(&m, &[&a]);
    }

    #[test]
    fn full_teacher_forcing_equals_plain_model_on_augmented_inputs() {
        let mut ss_cfg = config(CellKind::Lstm, LossVariant::UniformHf);
        ss_cfg.schedule = SamplingSchedule::exponential(0.9);
        let ss = RecurrentModel::new(ss_cfg, 5, &mut rng_from(5)).unwrap();
        let plain = RecurrentModel {
            config: config(CellKind::Lstm, LossVariant::UniformHf),
            stack: ss.stack.clone(),
            out: ss.out.clone(),
        };
        let ex = example(6, 5, 6);
        let mut aug = ex.clone();
        for t in 0..aug.len() {
            let mut prev = [0.0; 2];
            if t > 0 {
                prev[usize::from(ex.targets[t - 1] != 0)] = 1.0;
            }
            aug.events[t].extend_from_slice(&prev);
        }
        let cw = [1.0, 2.0];
        let (l1, g1) = ss.batch_loss(&[&ex], &mut ForwardCtx::seeded(cw, 9)).unwrap();
        let (l2, g2) = plain.batch_loss(&[&aug], &mut ForwardCtx::seeded(cw, 9)).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        let diff: f64 = g1
            .flat_trainable()
            .iter()
            .zip(g2.flat_trainable())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn prediction_ignores_future_events() {
        let m = RecurrentModel::new(config(CellKind::Gru, LossVariant::LastHf), 5, &mut rng_from(7)).unwrap();
        let ex = example(5, 5, 8);
        let full = m.step_probs(&ex).unwrap();
        let mut cut = ex.clone();
        cut.events.truncate(3);
        cut.targets.truncate(3);
        cut.index_mask.truncate(3);
        let prefix = m.step_probs(&cut).unwrap();
        for t in 0..3 {
            assert!((full[t] - prefix[t]).abs() < 1e-15);
        }
    }

    #[test]
    fn alpha_one_reduces_to_last_event_loss() {
        let mut convex = config(CellKind::Gru, LossVariant::ConvexHfLastHf);
        convex.alpha = 1.0;
        let a = RecurrentModel::new(convex, 5, &mut rng_from(12)).unwrap();
        let b = RecurrentModel {
            config: config(CellKind::Gru, LossVariant::LastHf),
            ..a.clone()
        };
        let ex = example(5, 5, 13);
        let cw = [1.0, 1.5];
        let (la, ga) = a.batch_loss(&[&ex], &mut ForwardCtx::deterministic(cw)).unwrap();
        let (lb, gb) = b.batch_loss(&[&ex], &mut ForwardCtx::deterministic(cw)).unwrap();
        assert!((la - lb).abs() < 1e-12);
        for (x, y) in ga.flat_trainable().iter().zip(gb.flat_trainable()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_dimension() {
        let m = RecurrentModel::new(config(CellKind::Vanilla, LossVariant::LastHf), 5, &mut rng_from(1)).unwrap();
        let ex = example(2, 4, 1);
        assert!(m.batch_loss(&[&ex], &mut ForwardCtx::deterministic([1.0, 1.0])).is_err());
        assert!(m.predict(&ex).is_nan());
    }
}
