use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite(alloc::format!("score {s}")));
    }
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass("AUC needs both outcome classes".into()));
    }
    Ok((n1, n0))
}

/// 1-based midranks: tied values share the mean of their positions.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney AUC: the probability that a random positive outscores a
/// random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n1, n0) = check_inputs(scores, labels)?;
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n1 as f64 * n0 as f64))
}

/// AUC with its DeLong variance and a normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucInterval {
    pub auc: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub n_positive: usize,
}

fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// DeLong structural-component variance of the AUC.
pub fn delong_variance(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n1, n0) = check_inputs(scores, labels)?;
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y != 1).map(|(s, _)| *s).collect();
    let all = midranks(&[pos.as_slice(), neg.as_slice()].concat());
    let (rp, rn) = (midranks(&pos), midranks(&neg));
    // V10_i: share of negatives beaten by positive i; V01_j: share of
    // positives beating negative j
    let v10: Vec<f64> = (0..n1).map(|i| (all[i] - rp[i]) / n0 as f64).collect();
    let v01: Vec<f64> = (0..n0).map(|j| 1.0 - (all[n1 + j] - rn[j]) / n1 as f64).collect();
    Ok(sample_variance(&v10) / n1 as f64 + sample_variance(&v01) / n0 as f64)
}

/// Standard normal CDF.
fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Two-sided standard normal critical value for a confidence level.
pub fn normal_critical(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config("level", alloc::format!("{level} is outside (0, 1)")));
    }
    let target = 0.5 + level / 2.0;
    let (mut lo, mut hi) = (0.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn auc_ci(scores: &[f64], labels: &[u8], level: f64) -> Result<AucInterval> {
    let a = auc(scores, labels)?;
    let var = delong_variance(scores, labels)?.max(0.0);
    let half = normal_critical(level)? * var.sqrt();
    Ok(AucInterval {
        auc: a,
        variance: var,
        ci_low: (a - half).clamp(0.0, 1.0),
        ci_high: (a + half).clamp(0.0, 1.0),
        n: labels.len(),
        n_positive: labels.iter().filter(|&&y| y == 1).count(),
    })
}

/// AUC of patients whose timeline length falls in one bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub bucket: String,
    pub min_len: usize,
    /// Inclusive upper bound; `None` for the open last bucket.
    pub max_len: Option<usize>,
    pub n: usize,
    pub n_positive: usize,
    /// `None` when the bucket lacks one of the classes.
    pub auc: Option<f64>,
}

const LENGTH_BUCKETS: [(usize, Option<usize>, &str); 5] =
    [(1, Some(1), "1"), (2, Some(2), "2"), (3, Some(3), "3"), (4, Some(4), "4"), (5, None, ">=5")];

pub fn auc_by_length(scores: &[f64], labels: &[u8], lengths: &[usize]) -> Result<Vec<LengthBucket>> {
    if scores.len() != labels.len() || lengths.len() != labels.len() {
        return Err(Error::Shape {
            expected: labels.len(),
            got: scores.len().min(lengths.len()),
        });
    }
    if lengths.contains(&0) {
        return Err(Error::Invalid("timeline length 0".into()));
    }
    Ok(LENGTH_BUCKETS
        .iter()
        .map(|&(min_len, max_len, name)| {
            let inside = |l: usize| l >= min_len && max_len.is_none_or(|m| l <= m);
            let (s, y): (Vec<f64>, Vec<u8>) = scores
                .iter()
                .zip(labels)
                .zip(lengths)
                .filter(|(_, &l)| inside(l))
                .map(|((s, y), _)| (*s, *y))
                .unzip();
            LengthBucket {
                bucket: name.into(),
                min_len,
                max_len,
                n: y.len(),
                n_positive: y.iter().filter(|&&v| v == 1).count(),
                auc: auc(&s, &y).ok(),
            }
        })
        .collect())
}
