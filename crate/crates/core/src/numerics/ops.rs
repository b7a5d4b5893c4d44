use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{Parameters, Role};
#[allow(unused_imports)]
use crate::math::Float;
use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(v);
    v.iter().map(|x| x - lse).collect()
}

/// `−Σ_c y_c ln ŷ_c` with the log argument clamped at 1e-12.
pub fn cross_entropy(y_onehot: &[f64], probs: &[f64]) -> Result<f64> {
    if y_onehot.len() != probs.len() {
        return Err(Error::Shape {
            expected: y_onehot.len(),
            got: probs.len(),
        });
    }
    Ok(-y_onehot
        .iter()
        .zip(probs)
        .map(|(y, p)| if *y == 0.0 { 0.0 } else { y * p.max(1e-12).ln() })
        .sum::<f64>())
}

/// Element-wise nonlinearity with its derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => relu(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    pub fn grad(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn apply_vec(self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| self.apply(*v)).collect()
    }

    /// `dx = dy ⊙ φ'(x)`.
    pub fn backward(self, x: &[f64], y: &[f64], dy: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(y)
            .zip(dy)
            .map(|((a, b), d)| d * self.grad(*a, *b))
            .collect()
    }
}

/// `(λ/2)‖θ‖²` and its gradient `λθ`.
pub fn l2_penalty(theta: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let ss: f64 = theta.iter().map(|x| x * x).sum();
    (0.5 * lambda * ss, theta.iter().map(|x| lambda * x).collect())
}

/// Add the L2 penalty over a model's weights to `grads`, returning the
/// penalty value. Biases join only when `include_bias` is set; buffers never.
pub fn l2_regularize<P: Parameters>(model: &P, grads: &mut P, lambda: f64, include_bias: bool) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let mut penalty = 0.0;
    for (p, g) in model.params().into_iter().zip(grads.params_mut()) {
        let on = match p.role {
            Role::Weight => true,
            Role::Bias => include_bias,
            Role::Buffer => false,
        };
        if on {
            let (v, dg) = l2_penalty(&p.value.data, lambda);
            penalty += v;
            for (a, b) in g.value.data.iter_mut().zip(dg) {
                *a += b;
            }
        }
    }
    penalty
}

/// Rescale trainable gradients so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads
        .params()
        .iter()
        .filter(|p| p.trainable())
        .map(|p| p.value.sum_sq())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for p in grads.params_mut() {
            if p.trainable() {
                p.value.data.iter_mut().for_each(|x| *x *= s);
            }
        }
    }
    norm
}

/// Inverted-dropout mask: 0 with probability `p`, else `1/(1−p)`.
pub fn dropout_mask<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<f64> {
    debug_assert!((0.0..1.0).contains(&p));
    if p == 0.0 {
        return alloc::vec![1.0; n];
    }
    let keep = 1.0 / (1.0 - p);
    (0..n)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use alloc::vec;

    #[test]
    fn activations() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        assert_eq!(relu(-3.0), 0.0);
        assert_eq!(tanh(0.0), 0.0);
        let s = softmax(&[1000.0, 999.0, -5.0]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn cross_entropy_examples() {
        let ln2 = core::f64::consts::LN_2;
        assert!((cross_entropy(&[0.0, 1.0], &[0.5, 0.5]).unwrap() - ln2).abs() < 1e-12);
        assert_eq!(cross_entropy(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!((cross_entropy(&[0.0, 1.0], &[0.9, 0.1]).unwrap() - core::f64::consts::LN_10).abs() < 1e-9);
        assert!(cross_entropy(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn softmax_cross_entropy_is_lse_minus_true_logit() {
        let mut rng = rng_from(11);
        for _ in 0..200 {
            let logits: Vec<f64> = (0..4).map(|_| rng.random_range(-20.0..20.0)).collect();
            let k = rng.random_range(0..4);
            let mut y = vec![0.0; 4];
            y[k] = 1.0;
            let ce = cross_entropy(&y, &softmax(&logits)).unwrap();
            let direct = log_sum_exp(&logits) - logits[k];
            if direct < 27.0 {
                // beyond ln(1e12) the clamp takes over
                assert!((ce - direct).abs() < 1e-10, "{ce} vs {direct}");
            }
        }
    }

    #[test]
    fn l2_examples() {
        let (v, g) = l2_penalty(&[3.0, 4.0], 2.0);
        assert_eq!(v, 25.0);
        assert_eq!(g, vec![6.0, 8.0]);
        let (v0, g0) = l2_penalty(&[3.0, 4.0], 0.0);
        assert_eq!(v0, 0.0);
        assert_eq!(g0, vec![0.0, 0.0]);
    }

    #[test]
    fn l2_gradient_matches_finite_difference() {
        let theta = [0.3, -1.2, 2.5];
        let (_, g) = l2_penalty(&theta, 0.7);
        let err = super::super::grad_check(|t| l2_penalty(t, 0.7).0, &g, &theta, 1e-5);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn dropout_statistics() {
        assert!(dropout_mask(100, 0.0, &mut rng_from(1)).iter().all(|m| *m == 1.0));
        let m = dropout_mask(10_000, 0.5, &mut rng_from(2));
        let zeros = m.iter().filter(|x| **x == 0.0).count() as f64 / 10_000.0;
        assert!((zeros - 0.5).abs() < 0.02, "{zeros}");
        // expectation of a masked activation equals the activation
        let mut rng = rng_from(3);
        let act = 0.8;
        let mean: f64 = (0..10_000).map(|_| dropout_mask(1, 0.15, &mut rng)[0] * act).sum::<f64>() / 10_000.0;
        assert!((mean - act).abs() / act < 0.01, "{mean}");
    }
}
