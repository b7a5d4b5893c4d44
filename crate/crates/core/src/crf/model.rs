use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{forward_backward, viterbi, CrfPotentials, N_LABELS};
use crate::error::{Error, Result};
use crate::featurizer::Example;
use crate::layers::Dense;
use crate::model::{mean_over_batch, ForwardCtx, SequenceModel};
use crate::numerics::{Matrix, Param, Parameters, Role};
use crate::recurrent::{RecurrentStack, StackCache, StackConfig};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Potential {
    /// Per-event label scores plus a shared transition matrix.
    Unary,
    /// Per-event transition scores.
    Pairwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoder {
    /// Potentials are an affine map of the event vector.
    Linear,
    /// Per-event embeddings, no recurrence.
    Neural,
    /// Recurrent stack outputs.
    Recurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrfConfig {
    pub potential: Potential,
    pub encoder: Encoder,
    #[serde(flatten)]
    pub stack: StackConfig,
}

impl CrfConfig {
    pub fn linear(potential: Potential) -> Self {
        CrfConfig {
            potential,
            encoder: Encoder::Linear,
            stack: StackConfig {
                layers: 0,
                input_embed: 0,
                output_embed: 0,
                dropout: 0.0,
                ..Default::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stack.validate()?;
        let s = &self.stack;
        match self.encoder {
            Encoder::Linear if s.layers + s.input_embed + s.output_embed > 0 => Err(Error::config(
                "encoder",
                "a linear CRF takes no embeddings or recurrent layers",
            )),
            Encoder::Neural if s.layers > 0 => Err(Error::config("layers", "a neural CRF has no recurrent layers")),
            Encoder::Recurrent if s.layers == 0 => {
                Err(Error::config("layers", "a recurrent CRF needs at least one recurrent layer"))
            }
            _ => Ok(()),
        }
    }
}

/// Linear-chain CRF trained by class-weighted negative log-likelihood of
/// the full gap-label sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfModel {
    pub config: CrfConfig,
    pub stack: RecurrentStack,
    pub head: Dense,
    /// `L × L` transition scores (unary potentials only).
    pub transition: Option<Param>,
    /// Learned scores of the first label (unary potentials only).
    pub start: Option<Param>,
}

fn labels_of(ex: &Example) -> Vec<usize> {
    ex.targets.iter().map(|&y| usize::from(y != 0)).collect()
}

impl CrfModel {
    pub fn new(config: CrfConfig, input_dim: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let stack = RecurrentStack::new("crf", config.stack, input_dim, rng)?;
        let l = N_LABELS;
        let (width, transition, start) = match config.potential {
            Potential::Unary => (
                l,
                Some(Param::zeros("crf.transition", Role::Weight, l, l)),
                Some(Param::zeros("crf.start", Role::Bias, l, 1)),
            ),
            Potential::Pairwise => ((l + 1) * l, None, None),
        };
        let head = Dense::new("crf.head", stack.output_dim(), width, rng);
        Ok(CrfModel {
            config,
            stack,
            head,
            transition,
            start,
        })
    }

    fn encode(&self, ex: &Example, rng: Option<&mut Rng>) -> Result<(StackCache, CrfPotentials)> {
        if ex.events.is_empty() {
            return Err(Error::Empty("timeline".into()));
        }
        if ex.dim() != self.stack.input_dim {
            return Err(Error::Shape {
                expected: self.stack.input_dim,
                got: ex.dim(),
            });
        }
        let cache = self.stack.forward(&ex.events, rng);
        let l = N_LABELS;
        let outs: Vec<Vec<f64>> = cache.z.iter().map(|z| self.head.forward(z)).collect();
        let pots = match (&self.transition, &self.start) {
            (Some(a), Some(s)) => CrfPotentials::Unary {
                unary: Matrix::from_vec(outs.len(), l, outs.concat()),
                transition: a.value.clone(),
                start: s.value.data.clone(),
            },
            _ => CrfPotentials::Pairwise {
                pairwise: outs.into_iter().map(|o| Matrix::from_vec(l + 1, l, o)).collect(),
            },
        };
        pots.validate()?;
        Ok((cache, pots))
    }

    /// Potentials of a timeline with dropout off.
    pub fn potentials(&self, ex: &Example) -> Result<CrfPotentials> {
        Ok(self.encode(ex, None)?.1)
    }

    /// Most probable gap-label sequence.
    pub fn decode(&self, ex: &Example) -> Result<Vec<usize>> {
        Ok(viterbi(&self.potentials(ex)?).0)
    }

    fn example_loss(&self, ex: &Example, ctx: &mut ForwardCtx, g: &mut CrfModel) -> Result<f64> {
        let (cache, pots) = self.encode(ex, ctx.rng.as_mut())?;
        let y = labels_of(ex);
        let n = y.len();
        let weight = ctx.class_weights[y[n - 1]];
        let tr = forward_backward(&pots);
        let nll = weight * (tr.log_z - pots.score(&y));
        if !nll.is_finite() {
            return Err(Error::NonFinite(format!("CRF loss of {}", ex.id)));
        }
        let l = N_LABELS;
        let mut dz = Vec::with_capacity(n);
        for t in 0..n {
            let mut dout = match self.config.potential {
                Potential::Unary => {
                    let mut d = tr.node_marginals.row(t).to_vec();
                    d[y[t]] -= 1.0;
                    d
                }
                Potential::Pairwise => {
                    let mut d = vec![0.0; (l + 1) * l];
                    if t == 0 {
                        d[l * l..].copy_from_slice(tr.node_marginals.row(0));
                        d[l * l + y[0]] -= 1.0;
                    } else {
                        d[..l * l].copy_from_slice(&tr.edge_marginals[t - 1].data);
                        d[y[t - 1] * l + y[t]] -= 1.0;
                    }
                    d
                }
            };
            for v in &mut dout {
                *v *= weight;
            }
            dz.push(self.head.backward(&cache.z[t], &dout, &mut g.head));
        }
        if let (Some(ga), Some(gs)) = (g.transition.as_mut(), g.start.as_mut()) {
            for t in 1..n {
                for (acc, e) in ga.value.data.iter_mut().zip(&tr.edge_marginals[t - 1].data) {
                    *acc += weight * e;
                }
                let k = y[t - 1] * l + y[t];
                ga.value.data[k] -= weight;
            }
            for (k, acc) in gs.value.data.iter_mut().enumerate() {
                *acc += weight * (tr.node_marginals.get(0, k) - f64::from(u8::from(k == y[0])));
            }
        }
        self.stack.backward(&cache, dz, &mut g.stack);
        Ok(nll)
    }
}

impl Parameters for CrfModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.stack.params();
        v.extend(self.head.params());
        v.extend(self.transition.iter());
        v.extend(self.start.iter());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.stack.params_mut();
        v.extend(self.head.params_mut());
        v.extend(self.transition.iter_mut());
        v.extend(self.start.iter_mut());
        v
    }
}

impl SequenceModel for CrfModel {
    fn batch_loss(&self, batch: &[&Example], ctx: &mut ForwardCtx) -> Result<(f64, Self)> {
        mean_over_batch(self, batch, |ex, g| self.example_loss(ex, ctx, g))
    }

    /// Node marginal of a readmission at the final event.
    fn predict(&self, ex: &Example) -> f64 {
        match self.potentials(ex) {
            Ok(p) => {
                let tr = forward_backward(&p);
                tr.node_marginals.get(p.len() - 1, 1)
            }
            Err(_) => f64::NAN,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crf::trellis::tests::all_labelings;
    use crate::layers::CellKind;
    #[allow(unused_imports)]
    use crate::math::Float;
    use crate::numerics::{grad_check, log_sum_exp, Activation};
    use crate::rng::rng_from;
    use alloc::string::String;
    use rand::Rng as _;

    fn example(t: usize, d: usize, seed: u64) -> Example {
        let mut rng = rng_from(seed);
        Example {
            id: String::from("p"),
            events: (0..t).map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect(),
            targets: (0..t).map(|_| u8::from(rng.random::<bool>())).collect(),
            index_mask: vec![true; t],
        }
    }

    fn configs() -> Vec<CrfConfig> {
        let neural = StackConfig {
            cell: CellKind::Gru,
            hidden: 5,
            layers: 0,
            input_embed: 4,
            output_embed: 3,
            activation: Activation::Tanh,
            dropout: 0.0,
        };
        let recurrent = StackConfig {
            layers: 1,
            input_embed: 0,
            ..neural
        };
        let mut out = Vec::new();
        for potential in [Potential::Unary, Potential::Pairwise] {
            out.push(CrfConfig::linear(potential));
            out.push(CrfConfig {
                potential,
                encoder: Encoder::Neural,
                stack: neural,
            });
            out.push(CrfConfig {
                potential,
                encoder: Encoder::Recurrent,
                stack: recurrent,
            });
        }
        out
    }

    fn zeroed(mut m: CrfModel) -> CrfModel {
        for p in m.params_mut() {
            p.value.fill(0.0);
        }
        m
    }

    #[test]
    fn zero_parameters_give_uniform_model() {
        for cfg in configs() {
            let m = zeroed(CrfModel::new(cfg, 6, &mut rng_from(1)).unwrap());
            let ex = example(2, 6, 3);
            let (loss, _) = m.batch_loss(&[&ex], &mut ForwardCtx::deterministic([1.0, 1.0])).unwrap();
            assert!((loss - 2.0 * core::f64::consts::LN_2).abs() < 1e-12);
            assert!((m.predict(&ex) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let a = example(4, 7, 11);
        let b = example(2, 7, 12);
        let cw = [0.7, 1.9];
        for (i, cfg) in configs().into_iter().enumerate() {
            let mut m = CrfModel::new(cfg, 7, &mut rng_from(20 + i as u64)).unwrap();
            if let Some(t) = m.transition.as_mut() {
                t.value.data = vec![0.3, -0.4, 0.1, 0.5];
            }
            let (_, g) = m.batch_loss(&[&a, &b], &mut ForwardCtx::deterministic(cw)).unwrap();
            let mut probe = m.clone();
            let err = grad_check(
                |th| {
                    probe.set_flat_trainable(th);
                    probe.batch_loss(&[&a, &b], &mut ForwardCtx::deterministic(cw)).unwrap().0
                },
                &g.flat_trainable(),
                &m.flat_trainable(),
                1e-5,
            );
            assert!(err < 1e-4, "{cfg:?}: {err}");
        }
    }

    #[test]
    fn path_probability_and_marginal_match_enumeration() {
        for cfg in configs() {
            let m = CrfModel::new(cfg, 5, &mut rng_from(4)).unwrap();
            let ex = example(4, 5, 5);
            let pots = m.potentials(&ex).unwrap();
            let paths = all_labelings(4, 2);
            let scores: Vec<f64> = paths.iter().map(|y| pots.score(y)).collect();
            let log_z = log_sum_exp(&scores);
            let truth = labels_of(&ex);
            let (loss, _) = m.batch_loss(&[&ex], &mut ForwardCtx::deterministic([1.0, 1.0])).unwrap();
            assert!(((-loss).exp() - (pots.score(&truth) - log_z).exp()).abs() < 1e-8);
            let last: f64 = paths
                .iter()
                .zip(&scores)
                .filter(|(y, _)| y[3] == 1)
                .map(|(_, s)| (s - log_z).exp())
                .sum();
            assert!((m.predict(&ex) - last).abs() < 1e-8);
        }
    }

    #[test]
    fn single_event_prediction_is_softmax_of_scores() {
        let m = CrfModel::new(CrfConfig::linear(Potential::Pairwise), 3, &mut rng_from(8)).unwrap();
        let ex = example(1, 3, 9);
        let out = m.head.forward(&ex.events[0]);
        let p = crate::numerics::softmax(&out[4..6]);
        assert!((m.predict(&ex) - p[1]).abs() < 1e-15);
    }

    #[test]
    fn rejects_inconsistent_encoders() {
        let mut cfg = CrfConfig::linear(Potential::Unary);
        cfg.stack.layers = 1;
        assert!(cfg.validate().is_err());
        cfg.encoder = Encoder::Neural;
        assert!(cfg.validate().is_err());
    }
}
