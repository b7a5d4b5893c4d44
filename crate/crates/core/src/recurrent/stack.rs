use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{CellKind, Embed, RecurrentLayer, StepCache};
use crate::numerics::{dropout_mask, Activation, Param};
use crate::rng::Rng;

/// Shape of the event encoder shared by the recurrent labelers and the
/// neural CRFs: optional input embedding, recurrent layers, optional output
/// embedding. With zero layers it is a per-event feedforward encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    pub cell: CellKind,
    pub hidden: usize,
    pub layers: usize,
    /// Width of the input embedding; 0 disables it.
    pub input_embed: usize,
    /// Width of the output embedding; 0 disables it.
    pub output_embed: usize,
    pub activation: Activation,
    pub dropout: f64,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            cell: CellKind::Gru,
            hidden: 32,
            layers: 1,
            input_embed: 0,
            output_embed: 0,
            activation: Activation::Tanh,
            dropout: 0.15,
        }
    }
}

impl StackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers > 0 && self.hidden == 0 {
            return Err(Error::config("hidden", "hidden size must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", format!("{} is outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentStack {
    pub config: StackConfig,
    pub input_dim: usize,
    pub input_embed: Option<Embed>,
    pub layers: Vec<RecurrentLayer>,
    pub output_embed: Option<Embed>,
}

/// Per-timeline activations recorded by [`RecurrentStack::step`].
#[derive(Debug, Clone, Default)]
pub struct StackCache {
    x: Vec<Vec<f64>>,
    embed_in: Vec<(Vec<f64>, Vec<f64>)>,
    embed_mask: Vec<Vec<f64>>,
    layer_in: Vec<Vec<Vec<f64>>>,
    steps: Vec<Vec<StepCache>>,
    masks: Vec<Vec<Vec<f64>>>,
    out_in: Vec<Vec<f64>>,
    embed_out: Vec<(Vec<f64>, Vec<f64>)>,
    /// Encoder output for every event processed so far.
    pub z: Vec<Vec<f64>>,
}

impl StackCache {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

fn apply_mask(v: &mut [f64], mask: &[f64]) {
    for (a, m) in v.iter_mut().zip(mask) {
        *a *= m;
    }
}

impl RecurrentStack {
    pub fn new(name: &str, config: StackConfig, input_dim: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let act = config.activation;
        let mut width = input_dim;
        let input_embed = (config.input_embed > 0).then(|| {
            let e = Embed::new(&format!("{name}.input_embed"), width, config.input_embed, act, rng);
            width = config.input_embed;
            e
        });
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            layers.push(RecurrentLayer::new(
                &format!("{name}.rnn{l}"),
                config.cell,
                act,
                width,
                config.hidden,
                rng,
            ));
            width = config.hidden;
        }
        let output_embed = (config.output_embed > 0)
            .then(|| Embed::new(&format!("{name}.output_embed"), width, config.output_embed, act, rng));
        Ok(RecurrentStack {
            config,
            input_dim,
            input_embed,
            layers,
            output_embed,
        })
    }

    pub fn output_dim(&self) -> usize {
        if let Some(e) = &self.output_embed {
            e.output_dim()
        } else if let Some(l) = self.layers.last() {
            l.hidden
        } else if let Some(e) = &self.input_embed {
            e.output_dim()
        } else {
            self.input_dim
        }
    }

    pub fn cache(&self) -> StackCache {
        let n = self.layers.len();
        StackCache {
            layer_in: vec![Vec::new(); n],
            steps: vec![Vec::new(); n],
            masks: vec![Vec::new(); n],
            ..Default::default()
        }
    }

    fn dropout(&self, n: usize, rng: Option<&mut Rng>) -> Vec<f64> {
        match rng {
            Some(r) if self.config.dropout > 0.0 => dropout_mask(n, self.config.dropout, r),
            _ => Vec::new(),
        }
    }

    /// Advance by one event and return its encoding. Dropout is active only
    /// when `rng` is given.
    pub fn step(&self, x: Vec<f64>, cache: &mut StackCache, mut rng: Option<&mut Rng>) -> Vec<f64> {
        let mut h = x.clone();
        cache.x.push(x);
        if let Some(e) = &self.input_embed {
            let (pre, post) = e.forward(&h);
            h.clone_from(&post);
            cache.embed_in.push((pre, post));
            if self.layers.is_empty() {
                let mask = self.dropout(h.len(), rng.as_deref_mut());
                apply_mask(&mut h, &mask);
                cache.embed_mask.push(mask);
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let (h_prev, c_prev) = match cache.steps[l].last() {
                Some(s) => (s.h.clone(), s.c.clone()),
                None => (vec![0.0; layer.hidden], vec![0.0; layer.hidden]),
            };
            let st = layer.step(&h, &h_prev, &c_prev);
            cache.layer_in[l].push(core::mem::take(&mut h));
            h = st.h.clone();
            cache.steps[l].push(st);
            let mask = self.dropout(h.len(), rng.as_deref_mut());
            apply_mask(&mut h, &mask);
            cache.masks[l].push(mask);
        }
        if let Some(e) = &self.output_embed {
            let (pre, post) = e.forward(&h);
            cache.out_in.push(core::mem::replace(&mut h, post.clone()));
            cache.embed_out.push((pre, post));
        }
        cache.z.push(h.clone());
        h
    }

    /// Encode a whole timeline.
    pub fn forward(&self, xs: &[Vec<f64>], mut rng: Option<&mut Rng>) -> StackCache {
        let mut cache = self.cache();
        for x in xs {
            self.step(x.clone(), &mut cache, rng.as_deref_mut());
        }
        cache
    }

    /// Accumulate parameter gradients given `dz[t] = ∂L/∂z_t`.
    pub fn backward(&self, cache: &StackCache, dz: Vec<Vec<f64>>, g: &mut RecurrentStack) {
        let mut d = dz;
        if let (Some(e), Some(ge)) = (&self.output_embed, g.output_embed.as_mut()) {
            for (t, dt) in d.iter_mut().enumerate() {
                let (pre, post) = &cache.embed_out[t];
                *dt = e.backward(&cache.out_in[t], pre, post, dt, ge, true).unwrap_or_default();
            }
        }
        for l in (0..self.layers.len()).rev() {
            for (dt, mask) in d.iter_mut().zip(&cache.masks[l]) {
                apply_mask(dt, mask);
            }
            let need = l > 0 || self.input_embed.is_some();
            let dx = self.layers[l].backward(&cache.layer_in[l], &cache.steps[l], &d, &mut g.layers[l], need);
            if need {
                d = dx;
            }
        }
        if let (Some(e), Some(ge)) = (&self.input_embed, g.input_embed.as_mut()) {
            for (t, dt) in d.iter_mut().enumerate() {
                if self.layers.is_empty() {
                    apply_mask(dt, &cache.embed_mask[t]);
                }
                let (pre, post) = &cache.embed_in[t];
                e.backward(&cache.x[t], pre, post, dt, ge, false);
            }
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        if let Some(e) = &self.input_embed {
            v.extend(e.dense.params());
        }
        for l in &self.layers {
            v.extend(l.params());
        }
        if let Some(e) = &self.output_embed {
            v.extend(e.dense.params());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        if let Some(e) = &mut self.input_embed {
            v.extend(e.dense.params_mut());
        }
        for l in &mut self.layers {
            v.extend(l.params_mut());
        }
        if let Some(e) = &mut self.output_embed {
            v.extend(e.dense.params_mut());
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn output_dims() {
        let mut rng = rng_from(1);
        let mut cfg = StackConfig {
            hidden: 6,
            layers: 2,
            input_embed: 4,
            output_embed: 3,
            ..Default::default()
        };
        assert_eq!(RecurrentStack::new("s", cfg, 9, &mut rng).unwrap().output_dim(), 3);
        cfg.output_embed = 0;
        assert_eq!(RecurrentStack::new("s", cfg, 9, &mut rng).unwrap().output_dim(), 6);
        cfg.layers = 0;
        assert_eq!(RecurrentStack::new("s", cfg, 9, &mut rng).unwrap().output_dim(), 4);
        cfg.input_embed = 0;
        assert_eq!(RecurrentStack::new("s", cfg, 9, &mut rng).unwrap().output_dim(), 9);
    }

    #[test]
    fn encodings_are_causal() {
        let mut rng = rng_from(2);
        let cfg = StackConfig {
            cell: CellKind::Lstm,
            hidden: 5,
            layers: 2,
            input_embed: 3,
            output_embed: 2,
            ..Default::default()
        };
        let s = RecurrentStack::new("s", cfg, 4, &mut rng).unwrap();
        let xs: Vec<Vec<f64>> = (0..5).map(|t| (0..4).map(|j| (t * 4 + j) as f64 * 0.1).collect()).collect();
        let full = s.forward(&xs, None);
        let mut altered = xs.clone();
        altered[4] = vec![9.0; 4];
        let other = s.forward(&altered, None);
        for t in 0..4 {
            assert_eq!(full.z[t], other.z[t]);
        }
        assert_ne!(full.z[4], other.z[4]);
    }
}
