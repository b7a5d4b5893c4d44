use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use crate::math::Float;
use crate::numerics::{Param, Role};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    Max,
    Avg,
}

/// Stride-1 "same" convolution over `(channel, row, column)` images with
/// square `k × k` kernels (odd `k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    /// `c_out × (c_in·k·k)`.
    pub w: Param,
    pub b: Param,
}

impl Conv2d {
    /// With `bias` off the layer is linear, for use before batch norm.
    pub fn new(name: &str, c_in: usize, c_out: usize, k: usize, bias: bool, rng: &mut Rng) -> Self {
        let mut w = Param::zeros(alloc::format!("{name}.w"), Role::Weight, c_out, c_in * k * k);
        let a = (6.0 / ((c_in + c_out) * k * k) as f64).sqrt();
        w.value.data.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
        Conv2d {
            c_in,
            c_out,
            k,
            w,
            b: Param::zeros(alloc::format!("{name}.b"), Role::Bias, if bias { c_out } else { 0 }, 1),
        }
    }

    #[inline]
    fn widx(&self, co: usize, ci: usize, ky: usize, kx: usize) -> usize {
        ((co * self.c_in + ci) * self.k + ky) * self.k + kx
    }

    /// Visit every (input pixel, kernel tap, output pixel) triple.
    fn taps(&self, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
        let p = self.k / 2;
        for yi in 0..h {
            for xi in 0..w {
                for ky in 0..self.k {
                    let Some(yo) = (yi + p).checked_sub(ky).filter(|v| *v < h) else {
                        continue;
                    };
                    for kx in 0..self.k {
                        let Some(xo) = (xi + p).checked_sub(kx).filter(|v| *v < w) else {
                            continue;
                        };
                        f(yi * w + xi, ky, kx, yo * w + xo);
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let hw = h * w;
        let mut out = vec![0.0; self.c_out * hw];
        for (co, b) in self.b.value.data.iter().enumerate() {
            out[co * hw..(co + 1) * hw].fill(*b);
        }
        let wd = &self.w.value.data;
        for ci in 0..self.c_in {
            let xc = &x[ci * hw..(ci + 1) * hw];
            self.taps(h, w, |i, ky, kx, o| {
                let v = xc[i];
                if v != 0.0 {
                    for co in 0..self.c_out {
                        out[co * hw + o] += wd[self.widx(co, ci, ky, kx)] * v;
                    }
                }
            });
        }
        out
    }

    /// Accumulate parameter gradients; returns the input gradient when
    /// `need_dx` is set.
    pub fn backward(&self, x: &[f64], h: usize, w: usize, dy: &[f64], g: &mut Conv2d, need_dx: bool) -> Option<Vec<f64>> {
        let hw = h * w;
        for (co, gb) in g.b.value.data.iter_mut().enumerate() {
            *gb += dy[co * hw..(co + 1) * hw].iter().sum::<f64>();
        }
        let mut dx = need_dx.then(|| vec![0.0; self.c_in * hw]);
        let wd = &self.w.value.data;
        let gw = &mut g.w.value.data;
        for ci in 0..self.c_in {
            let xc = &x[ci * hw..(ci + 1) * hw];
            self.taps(h, w, |i, ky, kx, o| {
                let v = xc[i];
                if v != 0.0 {
                    for co in 0..self.c_out {
                        gw[self.widx(co, ci, ky, kx)] += dy[co * hw + o] * v;
                    }
                }
                if let Some(dx) = dx.as_mut() {
                    let mut s = 0.0;
                    for co in 0..self.c_out {
                        s += wd[self.widx(co, ci, ky, kx)] * dy[co * hw + o];
                    }
                    dx[ci * hw + i] += s;
                }
            });
        }
        dx
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Non-overlapping 2-D pooling with windows of `min(2, extent)` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool2d {
    pub kind: Pool,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Pool2d {
    pub fn window(&self) -> (usize, usize) {
        (self.h.min(2), self.w.min(2))
    }

    pub fn out_shape(&self) -> (usize, usize) {
        let (ph, pw) = self.window();
        (self.h / ph, self.w / pw)
    }

    /// Pooled image and, for max pooling, the winning input index of every
    /// output.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let (ph, pw) = self.window();
        let (oh, ow) = self.out_shape();
        let mut out = Vec::with_capacity(self.c * oh * ow);
        let mut arg = Vec::new();
        for c in 0..self.c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = usize::MAX;
                    let mut acc = 0.0;
                    for dy in 0..ph {
                        for dx in 0..pw {
                            let i = (c * self.h + oy * ph + dy) * self.w + ox * pw + dx;
                            match self.kind {
                                Pool::Max => {
                                    if best == usize::MAX || x[i] > x[best] {
                                        best = i;
                                    }
                                }
                                Pool::Avg => acc += x[i],
                            }
                        }
                    }
                    match self.kind {
                        Pool::Max => {
                            out.push(x[best]);
                            arg.push(best);
                        }
                        Pool::Avg => out.push(acc / (ph * pw) as f64),
                    }
                }
            }
        }
        (out, arg)
    }

    pub fn backward(&self, arg: &[usize], dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.c * self.h * self.w];
        match self.kind {
            Pool::Max => {
                for (i, d) in arg.iter().zip(dy) {
                    dx[*i] += d;
                }
            }
            Pool::Avg => {
                let (ph, pw) = self.window();
                let (oh, ow) = self.out_shape();
                let s = 1.0 / (ph * pw) as f64;
                for c in 0..self.c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let d = dy[(c * oh + oy) * ow + ox] * s;
                            for a in 0..ph {
                                for b in 0..pw {
                                    dx[(c * self.h + oy * ph + a) * self.w + ox * pw + b] += d;
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use crate::rng::rng_from;

    #[test]
    fn identity_kernel_copies_input() {
        let mut c = Conv2d::new("c", 1, 1, 3, true, &mut rng_from(1));
        c.w.value.fill(0.0);
        c.w.value.data[4] = 1.0;
        let x: Vec<f64> = (0..12).map(|v| v as f64).collect();
        assert_eq!(c.forward(&x, 3, 4), x);
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let c = Conv2d::new("c", 2, 3, 3, true, &mut rng_from(2));
        let x: Vec<f64> = (0..2 * 4 * 5).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let dy: Vec<f64> = (0..3 * 4 * 5).map(|i| ((i * 3 % 7) as f64 - 3.0) / 3.0).collect();
        let mut g = c.clone();
        g.w.value.fill(0.0);
        g.b.value.fill(0.0);
        let dx = c.backward(&x, 4, 5, &dy, &mut g, true).unwrap();
        let loss_x = |xv: &[f64]| c.forward(xv, 4, 5).iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>();
        assert!(grad_check(loss_x, &dx, &x, 1e-5) < 1e-6);
        let mut probe = c.clone();
        let loss_w = |wv: &[f64]| {
            probe.w.value.data.copy_from_slice(wv);
            probe.forward(&x, 4, 5).iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>()
        };
        assert!(grad_check(loss_w, &g.w.value.data, &c.w.value.data, 1e-5) < 1e-6);
    }

    #[test]
    fn pooling_shapes_and_routing() {
        let p = Pool2d {
            kind: Pool::Max,
            c: 1,
            h: 1,
            w: 4,
        };
        assert_eq!(p.out_shape(), (1, 2));
        let (y, arg) = p.forward(&[1.0, 3.0, -1.0, -2.0]);
        assert_eq!(y, vec![3.0, -1.0]);
        assert_eq!(p.backward(&arg, &[1.0, 2.0]), vec![0.0, 1.0, 2.0, 0.0]);
        let a = Pool2d { kind: Pool::Avg, ..p };
        assert_eq!(a.forward(&[1.0, 3.0, -1.0, -2.0]).0, vec![2.0, -1.5]);
    }
}
