use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;
use crate::numerics::{log_sum_exp, Matrix};

/// Log-potentials of a first-order linear chain over `L` labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CrfPotentials {
    /// `F = start[y_1] + Σ_t unary[t][y_t] + Σ_{t≥2} transition[y_{t−1}][y_t]`.
    Unary {
        unary: Matrix,
        transition: Matrix,
        start: Vec<f64>,
    },
    /// One `(L+1) × L` matrix per step. Row `L` scores the first label; rows
    /// `0..L` score transitions into step `t ≥ 2`.
    Pairwise { pairwise: Vec<Matrix> },
}

impl CrfPotentials {
    pub fn len(&self) -> usize {
        match self {
            CrfPotentials::Unary { unary, .. } => unary.rows,
            CrfPotentials::Pairwise { pairwise } => pairwise.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> usize {
        match self {
            CrfPotentials::Unary { unary, .. } => unary.cols,
            CrfPotentials::Pairwise { pairwise } => pairwise.first().map_or(0, |m| m.cols),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() || self.labels() == 0 {
            return Err(Error::Empty("potentials".into()));
        }
        let l = self.labels();
        let finite = match self {
            CrfPotentials::Unary {
                unary,
                transition,
                start,
            } => {
                if transition.rows != l || transition.cols != l {
                    return Err(Error::Shape {
                        expected: l * l,
                        got: transition.len(),
                    });
                }
                if start.len() != l {
                    return Err(Error::Shape {
                        expected: l,
                        got: start.len(),
                    });
                }
                unary.all_finite() && transition.all_finite() && start.iter().all(|v| v.is_finite())
            }
            CrfPotentials::Pairwise { pairwise } => {
                for m in pairwise {
                    if m.rows != l + 1 || m.cols != l {
                        return Err(Error::Shape {
                            expected: (l + 1) * l,
                            got: m.len(),
                        });
                    }
                }
                pairwise.iter().all(Matrix::all_finite)
            }
        };
        if finite {
            Ok(())
        } else {
            Err(Error::NonFinite("potentials".into()))
        }
    }

    /// Scores of the first label.
    pub fn initial(&self) -> Vec<f64> {
        match self {
            CrfPotentials::Unary { unary, start, .. } => unary.row(0).iter().zip(start).map(|(a, b)| a + b).collect(),
            CrfPotentials::Pairwise { pairwise } => pairwise[0].row(self.labels()).to_vec(),
        }
    }

    /// `E_t[y'][y]`, the score of moving from `y'` at `t−1` to `y` at `t ≥ 1`.
    pub fn edge(&self, t: usize, prev: usize, next: usize) -> f64 {
        match self {
            CrfPotentials::Unary {
                unary, transition, ..
            } => transition.get(prev, next) + unary.get(t, next),
            CrfPotentials::Pairwise { pairwise } => pairwise[t].get(prev, next),
        }
    }

    /// Total score `F` of a labeling.
    pub fn score(&self, labels: &[usize]) -> f64 {
        let mut s = self.initial()[labels[0]];
        for t in 1..labels.len() {
            s += self.edge(t, labels[t - 1], labels[t]);
        }
        s
    }

    /// The same distribution written as pairwise potentials.
    pub fn to_pairwise(&self) -> CrfPotentials {
        let l = self.labels();
        let init = self.initial();
        let pairwise = (0..self.len())
            .map(|t| {
                let mut m = Matrix::zeros(l + 1, l);
                if t == 0 {
                    m.row_mut(l).copy_from_slice(&init);
                } else {
                    for a in 0..l {
                        for b in 0..l {
                            m.set(a, b, self.edge(t, a, b));
                        }
                    }
                }
                m
            })
            .collect();
        CrfPotentials::Pairwise { pairwise }
    }
}

/// Forward-backward and Viterbi output for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct TrellisResult {
    pub log_alpha: Matrix,
    pub log_beta: Matrix,
    pub log_z: f64,
    pub node_marginals: Matrix,
    /// `edge_marginals[t−1][y'][y] = p(y_{t−1}=y', y_t=y)` for `t ≥ 1`.
    pub edge_marginals: Vec<Matrix>,
    pub viterbi_path: Vec<usize>,
    pub viterbi_score: f64,
}

/// Log-space sum-product over the chain. Potentials must be non-empty.
pub fn forward_backward(p: &CrfPotentials) -> TrellisResult {
    let n = p.len();
    let l = p.labels();
    assert!(n > 0 && l > 0, "empty chain");
    let mut alpha = Matrix::zeros(n, l);
    alpha.row_mut(0).copy_from_slice(&p.initial());
    let mut buf = vec![0.0; l];
    for t in 1..n {
        for y in 0..l {
            for (yp, b) in buf.iter_mut().enumerate() {
                *b = alpha.get(t - 1, yp) + p.edge(t, yp, y);
            }
            alpha.set(t, y, log_sum_exp(&buf));
        }
    }
    let mut beta = Matrix::zeros(n, l);
    for t in (0..n - 1).rev() {
        for yp in 0..l {
            for (y, b) in buf.iter_mut().enumerate() {
                *b = p.edge(t + 1, yp, y) + beta.get(t + 1, y);
            }
            beta.set(t, yp, log_sum_exp(&buf));
        }
    }
    let log_z = log_sum_exp(alpha.row(n - 1));
    let mut node = Matrix::zeros(n, l);
    for t in 0..n {
        for y in 0..l {
            node.set(t, y, (alpha.get(t, y) + beta.get(t, y) - log_z).exp());
        }
    }
    let edges = (1..n)
        .map(|t| {
            let mut m = Matrix::zeros(l, l);
            for yp in 0..l {
                for y in 0..l {
                    let v = alpha.get(t - 1, yp) + p.edge(t, yp, y) + beta.get(t, y) - log_z;
                    m.set(yp, y, v.exp());
                }
            }
            m
        })
        .collect();
    let (viterbi_path, viterbi_score) = viterbi(p);
    TrellisResult {
        log_alpha: alpha,
        log_beta: beta,
        log_z,
        node_marginals: node,
        edge_marginals: edges,
        viterbi_path,
        viterbi_score,
    }
}

/// Highest-scoring labeling; ties go to the lower label index.
pub fn viterbi(p: &CrfPotentials) -> (Vec<usize>, f64) {
    let n = p.len();
    let l = p.labels();
    assert!(n > 0 && l > 0, "empty chain");
    let mut delta = p.initial();
    let mut back = vec![vec![0usize; l]; n];
    for (t, bt) in back.iter_mut().enumerate().skip(1) {
        let mut next = vec![f64::NEG_INFINITY; l];
        for (y, nv) in next.iter_mut().enumerate() {
            for (yp, d) in delta.iter().enumerate() {
                let v = d + p.edge(t, yp, y);
                if v > *nv {
                    *nv = v;
                    bt[y] = yp;
                }
            }
        }
        delta = next;
    }
    let mut best = 0;
    for y in 1..l {
        if delta[y] > delta[best] {
            best = y;
        }
    }
    let score = delta[best];
    let mut path = vec![best; n];
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    (path, score)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng as _;

    pub(crate) fn all_labelings(n: usize, l: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..l).map(move |y| {
                        let mut q = p.clone();
                        q.push(y);
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub(crate) fn random_unary(n: usize, l: usize, seed: u64) -> CrfPotentials {
        let mut rng = rng_from(seed);
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect() };
        CrfPotentials::Unary {
            unary: Matrix::from_vec(n, l, draw(n * l)),
            transition: Matrix::from_vec(l, l, draw(l * l)),
            start: draw(l),
        }
    }

    fn random_pairwise(n: usize, l: usize, seed: u64) -> CrfPotentials {
        let mut rng = rng_from(seed);
        let pairwise = (0..n)
            .map(|_| Matrix::from_vec(l + 1, l, (0..(l + 1) * l).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()))
            .collect();
        CrfPotentials::Pairwise { pairwise }
    }

    fn check_against_enumeration(p: &CrfPotentials) {
        let (n, l) = (p.len(), p.labels());
        let paths = all_labelings(n, l);
        let scores: Vec<f64> = paths.iter().map(|y| p.score(y)).collect();
        let log_z = log_sum_exp(&scores);
        let r = forward_backward(p);
        assert!((r.log_z - log_z).abs() < 1e-8);
        let mut node = Matrix::zeros(n, l);
        let mut edge = vec![Matrix::zeros(l, l); n.saturating_sub(1)];
        let mut total = 0.0;
        for (y, s) in paths.iter().zip(&scores) {
            let pr = (s - log_z).exp();
            total += pr;
            for t in 0..n {
                node.set(t, y[t], node.get(t, y[t]) + pr);
                if t > 0 {
                    let m = &mut edge[t - 1];
                    m.set(y[t - 1], y[t], m.get(y[t - 1], y[t]) + pr);
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-8);
        for (a, b) in node.data.iter().zip(&r.node_marginals.data) {
            assert!((a - b).abs() < 1e-8);
        }
        for (m, rm) in edge.iter().zip(&r.edge_marginals) {
            for (a, b) in m.data.iter().zip(&rm.data) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        let mut best = 0;
        for i in 1..paths.len() {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        assert_eq!(r.viterbi_path, paths[best]);
        assert!((r.viterbi_score - scores[best]).abs() < 1e-12);
        let from_beta = log_sum_exp(&(0..l).map(|y| p.initial()[y] + r.log_beta.get(0, y)).collect::<Vec<_>>());
        assert!((from_beta - r.log_z).abs() < 1e-10);
        for t in 0..n {
            let s: f64 = r.node_marginals.row(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_chain_log_partition() {
        let p = CrfPotentials::Unary {
            unary: Matrix::zeros(3, 2),
            transition: Matrix::zeros(2, 2),
            start: vec![0.0; 2],
        };
        let r = forward_backward(&p);
        assert!((r.log_z - 3.0 * core::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(r.viterbi_path, vec![0, 0, 0]);
    }

    #[test]
    fn single_step_marginal_is_softmax() {
        let p = CrfPotentials::Unary {
            unary: Matrix::from_vec(1, 2, vec![0.3, 1.7]),
            transition: Matrix::zeros(2, 2),
            start: vec![0.0; 2],
        };
        let r = forward_backward(&p);
        let sm = crate::numerics::softmax(&[0.3, 1.7]);
        assert!((r.node_marginals.get(0, 1) - sm[1]).abs() < 1e-15);
    }

    #[test]
    fn viterbi_follows_unaries_without_transitions() {
        let p = CrfPotentials::Unary {
            unary: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
            transition: Matrix::zeros(2, 2),
            start: vec![0.0; 2],
        };
        assert_eq!(viterbi(&p).0, vec![0, 1]);
    }

    #[test]
    fn pairwise_single_step_scores_start_row() {
        let p = CrfPotentials::Pairwise {
            pairwise: vec![Matrix::from_vec(3, 2, vec![5.0, 6.0, 7.0, 8.0, 0.25, -1.0])],
        };
        assert_eq!(p.score(&[0]), 0.25);
        assert_eq!(p.score(&[1]), -1.0);
    }

    #[test]
    fn matches_enumeration() {
        for seed in 0..5 {
            check_against_enumeration(&random_unary(4, 3, seed));
            check_against_enumeration(&random_pairwise(4, 3, 100 + seed));
            check_against_enumeration(&random_unary(5, 2, 200 + seed));
            check_against_enumeration(&random_pairwise(1, 3, 300 + seed));
        }
    }

    #[test]
    fn unary_and_pairwise_forms_agree() {
        let u = random_unary(5, 3, 42);
        let pw = u.to_pairwise();
        let (a, b) = (forward_backward(&u), forward_backward(&pw));
        assert!((a.log_z - b.log_z).abs() < 1e-12);
        assert_eq!(a.viterbi_path, b.viterbi_path);
        for (x, y) in a.node_marginals.data.iter().zip(&b.node_marginals.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn per_step_shift_moves_only_log_partition() {
        let p = random_pairwise(4, 2, 9);
        let mut shifted = p.clone();
        if let CrfPotentials::Pairwise { pairwise } = &mut shifted {
            for v in &mut pairwise[2].data {
                *v += 1.75;
            }
        }
        let (a, b) = (forward_backward(&p), forward_backward(&shifted));
        assert!((b.log_z - a.log_z - 1.75).abs() < 1e-10);
        assert_eq!(a.viterbi_path, b.viterbi_path);
        for (x, y) in a.node_marginals.data.iter().zip(&b.node_marginals.data) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
