use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::Example;
#[allow(unused_imports)]
use crate::math::Float;
use crate::model::{ForwardCtx, SequenceModel};
use crate::numerics::{sigmoid, Param, Parameters, Role};

/// Logistic regression on the final event: `p = σ(w·x_T + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub w: Param,
    pub b: Param,
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> Self {
        LogisticModel {
            w: Param::zeros("lr.w", Role::Weight, 1, dim),
            b: Param::zeros("lr.b", Role::Bias, 1, 1),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.value.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.w.value.data
    }

    pub fn bias(&self) -> f64 {
        self.b.value.data[0]
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.bias()
            + x.iter()
                .zip(self.weights())
                .filter(|(v, _)| **v != 0.0)
                .map(|(v, w)| v * w)
                .sum::<f64>()
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

impl Parameters for LogisticModel {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

impl SequenceModel for LogisticModel {
    fn batch_loss(&self, batch: &[&Example], ctx: &mut ForwardCtx) -> Result<(f64, Self)> {
        let design = Design::new(batch, self.dim(), ctx.class_weights)?;
        let (f, gw, gb) = design.loss_grad(self.weights(), self.bias());
        let mut g = LogisticModel::zeros(self.dim());
        g.w.value.data = gw;
        g.b.value.data[0] = gb;
        Ok((f, g))
    }

    fn predict(&self, ex: &Example) -> f64 {
        if ex.is_empty() || ex.dim() != self.dim() {
            return f64::NAN;
        }
        self.prob(ex.last_event())
    }
}

/// Final-event design matrix in sparse row form with per-row loss weights.
#[derive(Debug, Clone)]
pub struct Design {
    rows: Vec<Vec<(usize, f64)>>,
    y: Vec<f64>,
    s: Vec<f64>,
    dim: usize,
}

/// Numerically stable `ln(1 + e^z)`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl Design {
    /// Rows are the final events; each row's loss is weighted by its class
    /// weight divided by the number of rows.
    pub fn new(batch: &[&Example], dim: usize, class_weights: [f64; 2]) -> Result<Self> {
        let xs: Vec<&[f64]> = batch.iter().map(|e| e.last_event()).collect();
        let ys: Vec<u8> = batch.iter().map(|e| e.label()).collect();
        Design::from_rows(&xs, &ys, dim, class_weights)
    }

    pub fn from_rows(xs: &[&[f64]], ys: &[u8], dim: usize, class_weights: [f64; 2]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Empty("design".into()));
        }
        let n = xs.len() as f64;
        let mut rows = Vec::with_capacity(xs.len());
        for x in xs {
            if x.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    got: x.len(),
                });
            }
            rows.push(x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect());
        }
        Ok(Design {
            rows,
            y: ys.iter().map(|&y| f64::from(y != 0)).collect(),
            s: ys.iter().map(|&y| class_weights[usize::from(y != 0)] / n).collect(),
            dim,
        })
    }

    fn logits(&self, w: &[f64], b: f64) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| b + r.iter().map(|(j, v)| w[*j] * v).sum::<f64>())
            .collect()
    }

    /// Weighted negative log-likelihood.
    pub fn loss(&self, w: &[f64], b: f64) -> f64 {
        self.logits(w, b)
            .iter()
            .zip(&self.y)
            .zip(&self.s)
            .map(|((z, y), s)| s * (softplus(*z) - y * z))
            .sum()
    }

    /// Weighted negative log-likelihood and its gradient in `(w, b)`.
    pub fn loss_grad(&self, w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
        let mut f = 0.0;
        let mut gw = vec![0.0; self.dim];
        let mut gb = 0.0;
        for (((r, z), y), s) in self.rows.iter().zip(self.logits(w, b)).zip(&self.y).zip(&self.s) {
            f += s * (softplus(z) - y * z);
            let e = s * (sigmoid(z) - y);
            gb += e;
            for (j, v) in r {
                gw[*j] += e * v;
            }
        }
        (f, gw, gb)
    }

    /// Intercept minimizing the loss with all weights at zero.
    pub fn null_intercept(&self) -> f64 {
        let (mut pos, mut tot) = (0.0, 0.0);
        for (y, s) in self.y.iter().zip(&self.s) {
            pos += s * y;
            tot += s;
        }
        let p = (pos / tot).clamp(1e-12, 1.0 - 1e-12);
        (p / (1.0 - p)).ln()
    }

    /// Smallest L1 penalty at which every weight is zero.
    pub fn lambda_max(&self) -> f64 {
        let (_, gw, _) = self.loss_grad(&vec![0.0; self.dim], self.null_intercept());
        gw.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop when the optimality measure falls below this value.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 20_000,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub model: LogisticModel,
    /// Penalized objective at the solution.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final optimality measure: the proximal gradient-mapping norm for
    /// L1, the gradient norm for L2.
    pub grad_norm: f64,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn l1(w: &[f64]) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::config("lambda", "penalty must be finite and non-negative"))
    }
}

/// Minimize `NLL + λ‖w‖₁` by accelerated proximal gradient with
/// backtracking and monotone restarts. The bias is not penalized, so exact
/// zeros appear in `w` only.
pub fn fit_lasso(design: &Design, lambda: f64, opts: SolverOptions) -> Result<LogisticFit> {
    check_lambda(lambda)?;
    let d = design.dim;
    let objective = |w: &[f64], b: f64| design.loss(w, b) + lambda * l1(w);
    let (mut xw, mut xb) = (vec![0.0; d], design.null_intercept());
    let mut fx = objective(&xw, xb);
    let (mut yw, mut yb) = (xw.clone(), xb);
    let mut t = 1.0f64;
    let mut lip = 1.0f64;
    let mut gmap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let (fy, gw, gb) = design.loss_grad(&yw, yb);
        // let the step grow again after conservative backtracking
        lip = (lip * 0.8).max(1e-8);
        let (zw, zb) = loop {
            let zw: Vec<f64> = yw
                .iter()
                .zip(&gw)
                .map(|(y, g)| soft_threshold(y - g / lip, lambda / lip))
                .collect();
            let zb = yb - gb / lip;
            let mut lin = gb * (zb - yb);
            let mut sq = (zb - yb) * (zb - yb);
            for ((z, y), g) in zw.iter().zip(&yw).zip(&gw) {
                lin += g * (z - y);
                sq += (z - y) * (z - y);
            }
            if design.loss(&zw, zb) <= fy + lin + 0.5 * lip * sq + 1e-15 * fy.abs() || lip > 1e15 {
                gmap = lip * sq.sqrt();
                break (zw, zb);
            }
            lip *= 2.0;
        };
        let fz = objective(&zw, zb);
        if fz > fx && t > 1.0 {
            t = 1.0;
            yw.clone_from(&xw);
            yb = xb;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        for ((y, z), x) in yw.iter_mut().zip(&zw).zip(&xw) {
            *y = z + momentum * (z - x);
        }
        yb = zb + momentum * (zb - xb);
        xw = zw;
        xb = zb;
        fx = fz;
        t = t_next;
        if gmap < opts.tol {
            break;
        }
    }
    let mut model = LogisticModel::zeros(d);
    model.w.value.data = xw;
    model.b.value.data[0] = xb;
    Ok(LogisticFit {
        model,
        objective: fx,
        iterations,
        converged: gmap < opts.tol,
        grad_norm: gmap,
    })
}

/// In-place Cholesky factorization of a symmetric positive definite matrix
/// stored row-major; `None` when a pivot is not positive.
fn cholesky(a: &mut [f64], n: usize) -> Option<()> {
    for j in 0..n {
        let mut s = a[j * n + j];
        for k in 0..j {
            s -= a[j * n + k] * a[j * n + k];
        }
        if !(s > 0.0) {
            return None;
        }
        let l = s.sqrt();
        a[j * n + j] = l;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / l;
        }
    }
    Some(())
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * n + k] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= l[k * n + i] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
}

/// Minimize `NLL + (λ/2)‖w‖²` by damped Newton steps. The bias is not
/// penalized.
pub fn fit_ridge(design: &Design, lambda: f64, opts: SolverOptions) -> Result<LogisticFit> {
    check_lambda(lambda)?;
    let d = design.dim;
    let n = d + 1;
    let objective = |th: &[f64]| design.loss(&th[..d], th[d]) + 0.5 * lambda * th[..d].iter().map(|v| v * v).sum::<f64>();
    let mut theta = vec![0.0; n];
    theta[d] = design.null_intercept();
    let mut f = objective(&theta);
    let mut gnorm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let z = design.logits(&theta[..d], theta[d]);
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        for (((r, zi), y), s) in design.rows.iter().zip(&z).zip(&design.y).zip(&design.s) {
            let p = sigmoid(*zi);
            let e = s * (p - y);
            let h = s * p * (1.0 - p);
            grad[d] += e;
            hess[d * n + d] += h;
            for &(j, v) in r {
                grad[j] += e * v;
                hess[d * n + j] += h * v;
                for &(k, u) in r {
                    if k <= j {
                        hess[j * n + k] += h * v * u;
                    }
                }
            }
        }
        for j in 0..d {
            grad[j] += lambda * theta[j];
            hess[j * n + j] += lambda;
        }
        gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < opts.tol {
            converged = true;
            break;
        }
        for j in 0..n {
            for k in j + 1..n {
                hess[j * n + k] = hess[k * n + j];
            }
        }
        let mut jitter = 0.0;
        let factor = loop {
            let mut a = hess.clone();
            for j in 0..n {
                a[j * n + j] += jitter;
            }
            if cholesky(&mut a, n).is_some() {
                break a;
            }
            jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
            if jitter > 1e6 {
                return Err(Error::NonFinite("Newton system".into()));
            }
        };
        let mut step: Vec<f64> = grad.iter().map(|g| -g).collect();
        cholesky_solve(&factor, n, &mut step);
        let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        // half the squared Newton decrement bounds the remaining suboptimality
        if -0.5 * slope < opts.tol * opts.tol {
            converged = true;
            break;
        }
        let mut size = 1.0;
        let mut moved = false;
        while size >= 1e-12 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + size * s).collect();
            let fc = objective(&cand);
            if fc <= f + 1e-4 * size * slope && fc < f {
                theta = cand;
                f = fc;
                moved = true;
                break;
            }
            size *= 0.5;
        }
        if !moved {
            // the objective can no longer resolve the predicted decrease
            converged = -0.5 * slope < 1e-12 * f.abs().max(1.0);
            break;
        }
    }
    let mut model = LogisticModel::zeros(d);
    model.b.value.data[0] = theta[d];
    theta.truncate(d);
    model.w.value.data = theta;
    Ok(LogisticFit {
        model,
        objective: f,
        iterations,
        converged,
        grad_norm: gnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use crate::rng::rng_from;
    use crate::synthgen::planted_design;
    use rand::Rng as _;

    fn noisy_design(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = rng_from(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let z = 0.8 * x[0] - 0.5 * x[1] + 0.2;
            ys.push(u8::from(rng.random::<f64>() < sigmoid(z)));
            xs.push(x);
        }
        (xs, ys)
    }

    fn design_of(xs: &[Vec<f64>], ys: &[u8], cw: [f64; 2]) -> Design {
        let rows: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        Design::from_rows(&rows, ys, xs[0].len(), cw).unwrap()
    }

    #[test]
    fn forward_examples() {
        let mut m = LogisticModel::zeros(3);
        assert_eq!(m.prob(&[1.0, 2.0, 3.0]), 0.5);
        m.b.value.data[0] = 3.0f64.ln();
        assert!((m.prob(&[1.0, 2.0, 3.0]) - 0.75).abs() < 1e-15);
        m.w.value.data = vec![0.3, -0.2, 0.1];
        let x = [1.0, -2.0, 0.5];
        let p = m.prob(&x);
        let mut neg = m.clone();
        neg.scale(-1.0);
        assert!((neg.prob(&x) - (1.0 - p)).abs() < 1e-15);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let (xs, ys) = noisy_design(30, 4, 1);
        let design = design_of(&xs, &ys, [0.7, 1.8]);
        let th = [0.2, -0.1, 0.4, 0.05, -0.3];
        let (_, gw, gb) = design.loss_grad(&th[..4], th[4]);
        let mut g = gw.clone();
        g.push(gb);
        let err = grad_check(|t| design.loss(&t[..4], t[4]), &g, &th, 1e-5);
        assert!(err < 1e-6);
    }

    #[test]
    fn lambda_above_max_zeroes_everything() {
        let (xs, ys) = noisy_design(200, 6, 2);
        let design = design_of(&xs, &ys, [1.0, 1.0]);
        let lmax = design.lambda_max();
        let fit = fit_lasso(&design, lmax * 1.01, SolverOptions::default()).unwrap();
        assert!(fit.model.weights().iter().all(|w| *w == 0.0));
        let fit = fit_lasso(&design, lmax * 0.5, SolverOptions::default()).unwrap();
        assert!(fit.model.weights().iter().any(|w| *w != 0.0));
    }

    #[test]
    fn unpenalized_lasso_matches_newton() {
        let (xs, ys) = noisy_design(400, 5, 3);
        let design = design_of(&xs, &ys, [0.8, 1.4]);
        let a = fit_lasso(&design, 0.0, SolverOptions::default()).unwrap();
        let b = fit_ridge(&design, 0.0, SolverOptions::default()).unwrap();
        assert!(a.converged && b.converged);
        for (x, y) in a.model.weights().iter().zip(b.model.weights()) {
            assert!((x - y).abs() < 1e-4, "{x} vs {y}");
        }
        assert!((a.model.bias() - b.model.bias()).abs() < 1e-4);
    }

    #[test]
    fn ridge_solution_is_stationary() {
        let (xs, ys) = noisy_design(150, 4, 4);
        let design = design_of(&xs, &ys, [1.0, 1.0]);
        let fit = fit_ridge(&design, 0.1, SolverOptions::default()).unwrap();
        let (_, gw, gb) = design.loss_grad(fit.model.weights(), fit.model.bias());
        for (g, w) in gw.iter().zip(fit.model.weights()) {
            assert!((g + 0.1 * w).abs() < 1e-8);
        }
        assert!(gb.abs() < 1e-8);
    }

    #[test]
    fn ridge_converges_quickly_on_uncentered_features() {
        let (mut xs, ys) = noisy_design(300, 6, 8);
        xs.iter_mut().flatten().for_each(|v| *v += 1.5);
        let design = design_of(&xs, &ys, [0.7, 1.9]);
        let fit = fit_ridge(&design, 0.05, SolverOptions::default()).unwrap();
        assert!(fit.converged && fit.iterations < 30, "{} iterations {} {}", fit.iterations, fit.grad_norm, fit.objective);
        let (_, gw, gb) = design.loss_grad(fit.model.weights(), fit.model.bias());
        for (g, w) in gw.iter().zip(fit.model.weights()) {
            assert!((g + 0.05 * w).abs() < 1e-7);
        }
        assert!(gb.abs() < 1e-7);
    }

    #[test]
    fn lasso_kkt_conditions_hold() {
        let (xs, ys) = planted_design(500, 3, 10, 5);
        let design = design_of(&xs, &ys, [1.0, 1.0]);
        let lambda = 0.02;
        let fit = fit_lasso(&design, lambda, SolverOptions::default()).unwrap();
        assert!(fit.converged);
        let (_, gw, gb) = design.loss_grad(fit.model.weights(), fit.model.bias());
        assert!(gb.abs() < 1e-6);
        for (g, w) in gw.iter().zip(fit.model.weights()) {
            if *w == 0.0 {
                assert!(g.abs() <= lambda + 1e-6);
            } else {
                assert!((g + lambda * w.signum()).abs() < 1e-6);
            }
        }
    }
}
