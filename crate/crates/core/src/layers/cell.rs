use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{sigmoid, Activation, Param, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Vanilla,
    Lstm,
    Gru,
}

impl CellKind {
    /// Number of stacked gate blocks in the weight matrices.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Vanilla => 1,
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

/// One recurrent layer. Weight rows are stacked per gate:
/// vanilla `[a]`, LSTM `[i, f, o, c̃]`, GRU `[z, r, h̃]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentLayer {
    pub kind: CellKind,
    pub act: Activation,
    pub hidden: usize,
    pub w_x: Param,
    pub w_h: Param,
    pub b: Param,
}

/// Everything a step needs for backpropagation.
#[derive(Debug, Clone)]
pub struct StepCache {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Gate pre-activations (G·H).
    pre: Vec<f64>,
    /// Gate activations (G·H). For the GRU the candidate slot holds h̃.
    gates: Vec<f64>,
    /// GRU: `U_h h_{t−1}`; LSTM: φ(c_t). Empty for vanilla.
    aux: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl RecurrentLayer {
    pub fn new<R: Rng + ?Sized>(name: &str, kind: CellKind, act: Activation, input: usize, hidden: usize, rng: &mut R) -> Self {
        let g = kind.gates();
        let w_x = Param::glorot(format!("{name}.w_x"), g * hidden, input, rng);
        let mut w_h = Param::zeros(format!("{name}.w_h"), Role::Weight, g * hidden, hidden);
        for k in 0..g {
            let q = Param::orthogonal("q", hidden, rng);
            for r in 0..hidden {
                w_h.value.row_mut(k * hidden + r).copy_from_slice(q.value.row(r));
            }
        }
        RecurrentLayer {
            kind,
            act,
            hidden,
            w_x,
            w_h,
            b: Param::zeros(format!("{name}.b"), Role::Bias, g * hidden, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.value.cols
    }

    /// One step from `(h_{t−1}, c_{t−1})`.
    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let hd = self.hidden;
        let mut pre = self.w_x.value.matvec(x);
        for (p, b) in pre.iter_mut().zip(&self.b.value.data) {
            *p += b;
        }
        let rec = self.w_h.value.matvec(h_prev);
        match self.kind {
            CellKind::Vanilla => {
                for (p, r) in pre.iter_mut().zip(&rec) {
                    *p += r;
                }
                let h = self.act.apply_vec(&pre);
                StepCache {
                    h_prev: h_prev.to_vec(),
                    c_prev: Vec::new(),
                    gates: h.clone(),
                    pre,
                    aux: Vec::new(),
                    c: Vec::new(),
                    h,
                }
            }
            CellKind::Lstm => {
                for (p, r) in pre.iter_mut().zip(&rec) {
                    *p += r;
                }
                let mut gates = vec![0.0; 4 * hd];
                for k in 0..3 * hd {
                    gates[k] = sigmoid(pre[k]);
                }
                for k in 3 * hd..4 * hd {
                    gates[k] = self.act.apply(pre[k]);
                }
                let mut c = vec![0.0; hd];
                let mut tc = vec![0.0; hd];
                let mut h = vec![0.0; hd];
                for j in 0..hd {
                    c[j] = gates[hd + j] * c_prev[j] + gates[j] * gates[3 * hd + j];
                    tc[j] = self.act.apply(c[j]);
                    h[j] = gates[2 * hd + j] * tc[j];
                }
                StepCache {
                    h_prev: h_prev.to_vec(),
                    c_prev: c_prev.to_vec(),
                    pre,
                    gates,
                    aux: tc,
                    c,
                    h,
                }
            }
            CellKind::Gru => {
                let mut gates = vec![0.0; 3 * hd];
                for k in 0..2 * hd {
                    pre[k] += rec[k];
                    gates[k] = sigmoid(pre[k]);
                }
                let u = rec[2 * hd..].to_vec();
                let mut h = vec![0.0; hd];
                for j in 0..hd {
                    pre[2 * hd + j] += gates[hd + j] * u[j];
                    let ht = self.act.apply(pre[2 * hd + j]);
                    gates[2 * hd + j] = ht;
                    let z = gates[j];
                    h[j] = (1.0 - z) * ht + z * h_prev[j];
                }
                StepCache {
                    h_prev: h_prev.to_vec(),
                    c_prev: Vec::new(),
                    pre,
                    gates,
                    aux: u,
                    c: Vec::new(),
                    h,
                }
            }
        }
    }

    /// Run over a whole sequence from zero initial state.
    pub fn forward(&self, xs: &[Vec<f64>]) -> Vec<StepCache> {
        let hd = self.hidden;
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut out = Vec::with_capacity(xs.len());
        for x in xs {
            let st = self.step(x, &h, &c);
            h.clone_from(&st.h);
            if self.kind == CellKind::Lstm {
                c.clone_from(&st.c);
            }
            out.push(st);
        }
        out
    }

    /// Backpropagation through time. `dhs[t]` is the loss gradient arriving
    /// at `h_t` from above; returns input gradients when `need_dx` is set.
    pub fn backward(&self, xs: &[Vec<f64>], steps: &[StepCache], dhs: &[Vec<f64>], g: &mut RecurrentLayer, need_dx: bool) -> Vec<Vec<f64>> {
        let hd = self.hidden;
        let t_len = steps.len();
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut dxs = if need_dx { vec![Vec::new(); t_len] } else { Vec::new() };
        for t in (0..t_len).rev() {
            let st = &steps[t];
            let dh: Vec<f64> = dhs[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            // da_x feeds W_x and b; da_h feeds W_h
            let (da_x, da_h, mut dh_prev) = match self.kind {
                CellKind::Vanilla => {
                    let da = self.act.backward(&st.pre, &st.gates, &dh);
                    (da.clone(), da, vec![0.0; hd])
                }
                CellKind::Lstm => {
                    let mut da = vec![0.0; 4 * hd];
                    let mut dc_prev = vec![0.0; hd];
                    for j in 0..hd {
                        let (i, f, o, cc) = (st.gates[j], st.gates[hd + j], st.gates[2 * hd + j], st.gates[3 * hd + j]);
                        let tc = st.aux[j];
                        let d_o = dh[j] * tc;
                        let dc = dc_next[j] + dh[j] * o * self.act.grad(st.c[j], tc);
                        da[j] = dc * cc * i * (1.0 - i);
                        da[hd + j] = dc * st.c_prev[j] * f * (1.0 - f);
                        da[2 * hd + j] = d_o * o * (1.0 - o);
                        da[3 * hd + j] = dc * i * self.act.grad(st.pre[3 * hd + j], cc);
                        dc_prev[j] = dc * f;
                    }
                    dc_next = dc_prev;
                    (da.clone(), da, vec![0.0; hd])
                }
                CellKind::Gru => {
                    let mut da_x = vec![0.0; 3 * hd];
                    let mut da_h = vec![0.0; 3 * hd];
                    let mut dh_prev = vec![0.0; hd];
                    for j in 0..hd {
                        let (z, r, ht) = (st.gates[j], st.gates[hd + j], st.gates[2 * hd + j]);
                        let dht = dh[j] * (1.0 - z);
                        let dz = dh[j] * (st.h_prev[j] - ht);
                        dh_prev[j] = dh[j] * z;
                        let dpre = dht * self.act.grad(st.pre[2 * hd + j], ht);
                        let dr = dpre * st.aux[j];
                        let daz = dz * z * (1.0 - z);
                        let dar = dr * r * (1.0 - r);
                        da_x[j] = daz;
                        da_x[hd + j] = dar;
                        da_x[2 * hd + j] = dpre;
                        da_h[j] = daz;
                        da_h[hd + j] = dar;
                        da_h[2 * hd + j] = dpre * r;
                    }
                    (da_x, da_h, dh_prev)
                }
            };
            g.w_x.value.add_outer(&da_x, &xs[t]);
            for (gb, d) in g.b.value.data.iter_mut().zip(&da_x) {
                *gb += d;
            }
            g.w_h.value.add_outer(&da_h, &st.h_prev);
            let back = self.w_h.value.matvec_t(&da_h);
            for (a, b) in dh_prev.iter_mut().zip(back) {
                *a += b;
            }
            if need_dx {
                dxs[t] = self.w_x.value.matvec_t(&da_x);
            }
            dh_next = dh_prev;
        }
        dxs
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w_x, &self.w_h, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.b]
    }
}
