use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tensor::{Parameters, Role};
#[allow(unused_imports)]
use crate::math::Float;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Momentum used to blend batch statistics into buffer parameters.
    pub buffer_momentum: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            buffer_momentum: 0.1,
        }
    }
}

/// First and second moment accumulators, one vector per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Parameters>(model: &P, config: AdamConfig) -> Self {
        let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        AdamState {
            config,
            step: 0,
            m: shapes.iter().map(|n| alloc::vec![0.0; *n]).collect(),
            v: shapes.iter().map(|n| alloc::vec![0.0; *n]).collect(),
        }
    }

    /// One bias-corrected Adam update. Buffer parameters are instead moved
    /// toward the statistic carried in their gradient slot.
    pub fn step<P: Parameters>(&mut self, model: &mut P, grads: &P) -> Result<()> {
        let gp = grads.params();
        if gp.iter().any(|g| g.trainable() && !g.value.all_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);
        for (i, (p, g)) in model.params_mut().into_iter().zip(gp).enumerate() {
            if p.role == Role::Buffer {
                for (x, s) in p.value.data.iter_mut().zip(&g.value.data) {
                    *x = (1.0 - c.buffer_momentum) * *x + c.buffer_momentum * s;
                }
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, (x, gk)) in p.value.data.iter_mut().zip(&g.value.data).enumerate() {
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                *x -= c.learning_rate * mh / (vh.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Matrix, Param};
    use alloc::vec;

    #[derive(Clone)]
    struct Toy(Param);
    impl Parameters for Toy {
        fn params(&self) -> Vec<&Param> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            vec![&mut self.0]
        }
    }

    fn toy(vals: Vec<f64>) -> Toy {
        let n = vals.len();
        Toy(Param {
            name: "w".into(),
            role: Role::Weight,
            value: Matrix::from_vec(n, 1, vals),
        })
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = v̂ = 1 after bias correction, so the step is η·1/(1+ε)
        let mut model = toy(vec![1.0, -2.0, 0.5]);
        let grads = toy(vec![1.0, 1.0, 1.0]);
        let mut st = AdamState::new(&model, AdamConfig { learning_rate: 0.1, ..Default::default() });
        st.step(&mut model, &grads).unwrap();
        let want = [1.0 - 0.1 / (1.0 + 1e-8), -2.0 - 0.1 / (1.0 + 1e-8), 0.5 - 0.1 / (1.0 + 1e-8)];
        for (a, b) in model.0.value.data.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut model = toy(vec![1.0, 2.0]);
        let mut st = AdamState::new(&model, AdamConfig::default());
        st.step(&mut model, &toy(vec![0.0, 0.0])).unwrap();
        assert_eq!(model.0.value.data, vec![1.0, 2.0]);
    }

    #[test]
    fn deterministic_on_cloned_state() {
        let model = toy(vec![0.3, -0.7]);
        let grads = toy(vec![0.2, -0.9]);
        let st = AdamState::new(&model, AdamConfig::default());
        let (mut a, mut b) = (model.clone(), model.clone());
        let (mut sa, mut sb) = (st.clone(), st);
        sa.step(&mut a, &grads).unwrap();
        sb.step(&mut b, &grads).unwrap();
        assert_eq!(a.0.value.data, b.0.value.data);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut model = toy(vec![0.0]);
        let mut st = AdamState::new(&model, AdamConfig::default());
        assert!(st.step(&mut model, &toy(vec![f64::NAN])).is_err());
    }
}
