use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use crate::math::Float;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `y = self · x`. Zero entries of `x` are skipped, which matters for the
    /// mostly one-hot event vectors.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let nz = nonzeros(x);
        let mut y = vec![0.0; self.rows];
        if nz.len() * 2 < x.len() {
            for (r, out) in y.iter_mut().enumerate() {
                let row = self.row(r);
                let mut acc = 0.0;
                for &j in &nz {
                    acc += row[j] * x[j];
                }
                *out = acc;
            }
        } else {
            for (r, out) in y.iter_mut().enumerate() {
                *out = dot(self.row(r), x);
            }
        }
        y
    }

    /// `y = selfᵀ · v`.
    pub fn matvec_t(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            for (yc, &w) in y.iter_mut().zip(self.row(r)) {
                *yc += w * vr;
            }
        }
        y
    }

    /// `self += u · vᵀ`.
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        let nz = nonzeros(v);
        let sparse = nz.len() * 2 < v.len();
        let cols = self.cols;
        for (r, &ur) in u.iter().enumerate() {
            if ur == 0.0 {
                continue;
            }
            let row = &mut self.data[r * cols..(r + 1) * cols];
            if sparse {
                for &j in &nz {
                    row[j] += ur * v[j];
                }
            } else {
                for (w, &vj) in row.iter_mut().zip(v) {
                    *w += ur * vj;
                }
            }
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nonzeros(x: &[f64]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// How the optimizer and regularizer treat a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    /// Trainable and L2-penalized.
    Weight,
    /// Trainable, excluded from the L2 penalty unless requested.
    Bias,
    /// Not trained by gradient; the gradient slot carries a batch statistic
    /// that is blended into the value with momentum.
    Buffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub role: Role,
    pub value: Matrix,
}

impl Param {
    pub fn zeros(name: impl Into<String>, role: Role, rows: usize, cols: usize) -> Self {
        Param {
            name: name.into(),
            role,
            value: Matrix::zeros(rows, cols),
        }
    }

    /// Uniform(−a, a) with a = sqrt(6 / (fan_in + fan_out)).
    pub fn glorot<R: Rng + ?Sized>(name: impl Into<String>, rows: usize, cols: usize, rng: &mut R) -> Self {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let mut p = Param::zeros(name, Role::Weight, rows, cols);
        for v in p.value.data.iter_mut() {
            *v = rng.random_range(-a..a);
        }
        p
    }

    /// Random orthogonal square matrix (Gram-Schmidt on a uniform draw).
    pub fn orthogonal<R: Rng + ?Sized>(name: impl Into<String>, n: usize, rng: &mut R) -> Self {
        let mut p = Param::zeros(name, Role::Weight, n, n);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
        while basis.len() < n {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for b in &basis {
                let proj = dot(&v, b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm < 1e-6 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
        for (r, b) in basis.iter().enumerate() {
            p.value.row_mut(r).copy_from_slice(b);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn trainable(&self) -> bool {
        self.role != Role::Buffer
    }
}

/// Visiting access to a model's parameter tensors. The order of `params`
/// and `params_mut` must agree; gradients are carried in a value of the same
/// type, so optimizer steps zip the two lists.
pub trait Parameters: Clone {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for p in z.params_mut() {
            p.value.fill(0.0);
        }
        z
    }

    fn num_trainable(&self) -> usize {
        self.params().iter().filter(|p| p.trainable()).map(|p| p.len()).sum()
    }

    /// Trainable values flattened in visiting order.
    fn flat_trainable(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_trainable());
        for p in self.params() {
            if p.trainable() {
                out.extend_from_slice(&p.value.data);
            }
        }
        out
    }

    fn set_flat_trainable(&mut self, flat: &[f64]) {
        let mut off = 0;
        for p in self.params_mut() {
            if p.trainable() {
                let n = p.len();
                p.value.data.copy_from_slice(&flat[off..off + n]);
                off += n;
            }
        }
        assert_eq!(off, flat.len(), "flat parameter length");
    }

    /// Multiply every trainable tensor by `factor`.
    fn scale(&mut self, factor: f64) {
        for p in self.params_mut() {
            if p.trainable() {
                p.value.data.iter_mut().for_each(|v| *v *= factor);
            }
        }
    }

    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (p, q) in self.params_mut().into_iter().zip(other.params()) {
            for (a, b) in p.value.data.iter_mut().zip(&q.value.data) {
                *a += scale * b;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.value.all_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn matvec_sparse_and_dense_agree() {
        let m = Matrix::from_vec(2, 4, vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.0, 2.0]);
        assert_eq!(m.matvec(&[1.0, 0.0, 0.0, 0.0]), vec![1.0, -1.0]);
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0, 1.0]), vec![10.0, 1.5]);
        assert_eq!(m.matvec_t(&[1.0, 2.0]), vec![-1.0, 3.0, 3.0, 8.0]);
    }

    #[test]
    fn orthogonal_init_is_orthonormal() {
        let p = Param::orthogonal("w", 5, &mut rng_from(3));
        for i in 0..5 {
            for j in 0..5 {
                let d = dot(p.value.row(i), p.value.row(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }
}
