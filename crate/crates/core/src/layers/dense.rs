use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{Activation, Param, Role};

/// Affine map `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Dense {
            w: Param::glorot(format!("{name}.w"), output, input, rng),
            b: Param::zeros(format!("{name}.b"), Role::Bias, output, 1),
        }
    }

    /// `y = W x` with no bias, for layers followed by batch norm.
    pub fn linear<R: Rng + ?Sized>(name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Dense {
            w: Param::glorot(format!("{name}.w"), output, input, rng),
            b: Param::zeros(format!("{name}.b"), Role::Bias, 0, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.cols
    }

    pub fn output_dim(&self) -> usize {
        self.w.value.rows
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.w.value.matvec(x);
        for (yi, bi) in y.iter_mut().zip(&self.b.value.data) {
            *yi += bi;
        }
        y
    }

    /// Accumulate parameter gradients for upstream `dy` at input `x`.
    pub fn accumulate(&self, x: &[f64], dy: &[f64], g: &mut Dense) {
        g.w.value.add_outer(dy, x);
        for (gb, d) in g.b.value.data.iter_mut().zip(dy) {
            *gb += d;
        }
    }

    pub fn input_grad(&self, dy: &[f64]) -> Vec<f64> {
        self.w.value.matvec_t(dy)
    }

    pub fn backward(&self, x: &[f64], dy: &[f64], g: &mut Dense) -> Vec<f64> {
        self.accumulate(x, dy, g);
        self.input_grad(dy)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Affine map followed by a nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embed {
    pub dense: Dense,
    pub act: Activation,
}

impl Embed {
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, output: usize, act: Activation, rng: &mut R) -> Self {
        Embed {
            dense: Dense::new(name, input, output, rng),
            act,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.dense.output_dim()
    }

    /// Returns `(pre, post)`.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pre = self.dense.forward(x);
        let post = self.act.apply_vec(&pre);
        (pre, post)
    }

    pub fn backward(&self, x: &[f64], pre: &[f64], post: &[f64], dy: &[f64], g: &mut Embed, need_dx: bool) -> Option<Vec<f64>> {
        let da = self.act.backward(pre, post, dy);
        self.dense.accumulate(x, &da, &mut g.dense);
        need_dx.then(|| self.dense.input_grad(&da))
    }
}
