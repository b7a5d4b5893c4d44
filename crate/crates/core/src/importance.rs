//! Feature importance: normalized LASSO coefficients, perturbation of the
//! final event's features, and top-k overlap between rankings.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::{Example, FeatureKind, FeatureSpec};
#[allow(unused_imports)]
use crate::math::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    LassoCoefficient,
    DiffProb,
    DiffProbWeighted,
    RatioDiffProbWeighted,
}

impl Metric {
    pub fn slug(self) -> &'static str {
        match self {
            Metric::LassoCoefficient => "lasso_coefficient",
            Metric::DiffProb => "diff_prob",
            Metric::DiffProbWeighted => "diff_prob_weighted",
            Metric::RatioDiffProbWeighted => "ratio_diff_prob_weighted",
        }
    }

    pub fn parse(s: &str) -> Result<Metric> {
        [
            Metric::LassoCoefficient,
            Metric::DiffProb,
            Metric::DiffProbWeighted,
            Metric::RatioDiffProbWeighted,
        ]
        .into_iter()
        .find(|m| m.slug() == s)
        .ok_or_else(|| Error::config("metric", format!("unknown metric '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Raises readmission probability or log-odds.
    Increase,
    Decrease,
    Neutral,
}

impl Direction {
    fn of(v: Option<f64>) -> Direction {
        match v {
            Some(x) if x > 0.0 => Direction::Increase,
            Some(x) if x < 0.0 => Direction::Decrease,
            _ => Direction::Neutral,
        }
    }
}

/// A feature's score within one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    /// `None` when the feature never occurs.
    pub value: Option<f64>,
    /// Share of timelines whose final event has the feature present.
    pub occurrence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub feature: String,
    /// Mean over the folds where the feature scored.
    pub mean: Option<f64>,
    /// Sample standard deviation over those folds (0 for a single fold).
    pub sd: Option<f64>,
    pub occurrence: f64,
    pub direction: Direction,
    /// 1-based rank by decreasing |mean|; unscored features come last.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub metric: Metric,
    pub folds: usize,
    /// Sorted by rank.
    pub rows: Vec<ImportanceRow>,
    pub warnings: Vec<String>,
}

impl ImportanceTable {
    /// The `k` best-ranked features moving the outcome in `direction`.
    pub fn top_k(&self, k: usize, direction: Direction) -> Vec<&ImportanceRow> {
        self.rows.iter().filter(|r| r.direction == direction).take(k).collect()
    }

    pub fn get(&self, feature: &str) -> Option<&ImportanceRow> {
        self.rows.iter().find(|r| r.feature == feature)
    }
}

/// Combine per-fold scores by feature name into a ranked table.
pub fn aggregate(metric: Metric, folds: &[Vec<FeatureScore>]) -> ImportanceTable {
    let mut by_name: BTreeMap<&str, (Vec<f64>, f64)> = BTreeMap::new();
    for fold in folds {
        for s in fold {
            let e = by_name.entry(s.feature.as_str()).or_insert((Vec::new(), 0.0));
            if let Some(v) = s.value {
                e.0.push(v);
            }
            e.1 += s.occurrence;
        }
    }
    let nf = folds.len().max(1) as f64;
    let mut rows: Vec<ImportanceRow> = by_name
        .into_iter()
        .map(|(name, (vals, occ))| {
            let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            let sd = mean.map(|m| {
                if vals.len() < 2 {
                    0.0
                } else {
                    (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
                }
            });
            ImportanceRow {
                feature: name.into(),
                mean,
                sd,
                occurrence: occ / nf,
                direction: Direction::of(mean),
                rank: 0,
            }
        })
        .collect();
    let key = |r: &ImportanceRow| r.mean.map_or(-1.0, f64::abs);
    rows.sort_by(|a, b| key(b).total_cmp(&key(a)).then_with(|| a.feature.cmp(&b.feature)));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    ImportanceTable {
        metric,
        folds: folds.len(),
        rows,
        warnings: Vec::new(),
    }
}

/// Coefficients of one fold's LASSO model with their feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldCoefficients {
    pub names: Vec<String>,
    pub weights: Vec<f64>,
}

/// Coefficients scaled by their fold's largest magnitude, then averaged
/// across folds (features missing from a fold's vocabulary count as 0).
pub fn lasso_importance(folds: &[FoldCoefficients]) -> Result<ImportanceTable> {
    let mut warnings = Vec::new();
    let mut scored = Vec::new();
    let mut all_names: BTreeMap<&str, ()> = BTreeMap::new();
    for (i, f) in folds.iter().enumerate() {
        if f.names.len() != f.weights.len() {
            return Err(Error::Shape {
                expected: f.names.len(),
                got: f.weights.len(),
            });
        }
        f.names.iter().for_each(|n| {
            all_names.insert(n.as_str(), ());
        });
        let scale = f.weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        if scale == 0.0 {
            warnings.push(format!("fold {i}: every coefficient is zero"));
            continue;
        }
        scored.push(f);
    }
    if scored.is_empty() {
        return Ok(ImportanceTable {
            metric: Metric::LassoCoefficient,
            folds: folds.len(),
            rows: Vec::new(),
            warnings,
        });
    }
    let per_fold: Vec<Vec<FeatureScore>> = scored
        .iter()
        .map(|f| {
            let scale = f.weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
            let own: BTreeMap<&str, f64> = f.names.iter().map(|n| n.as_str()).zip(f.weights.iter().map(|w| w / scale)).collect();
            all_names
                .keys()
                .map(|n| {
                    let v = own.get(n).copied().unwrap_or(0.0);
                    FeatureScore {
                        feature: (*n).into(),
                        value: Some(v),
                        occurrence: (v != 0.0) as u8 as f64,
                    }
                })
                .collect()
        })
        .collect();
    let mut table = aggregate(Metric::LassoCoefficient, &per_fold);
    table.folds = folds.len();
    table.warnings = warnings;
    Ok(table)
}

/// How "absent" is encoded for a continuous feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentMode {
    /// The training mean, i.e. 0 after standardization.
    StandardizedMean,
    /// A raw value of 0, standardized.
    RawZero,
}

/// The absent value of every column: 0 for indicator and count columns,
/// continuous columns per `mode`.
pub fn absent_values(spec: &FeatureSpec, mode: AbsentMode) -> Vec<f64> {
    let mut out = alloc::vec![0.0; spec.d];
    if mode == AbsentMode::RawZero {
        for (name, s) in &spec.scaling {
            out[spec.block(name).offset] = -s.mean / s.sd;
        }
    }
    out
}

/// Column names and absent values of a fitted feature spec.
pub fn perturbation_frame(spec: &FeatureSpec, mode: AbsentMode) -> (Vec<String>, Vec<f64>, Vec<FeatureKind>) {
    (spec.feature_names(), absent_values(spec, mode), spec.column_kinds())
}

/// Perturbation scores of each final-event feature. For a timeline whose
/// final event has feature `j` present (different from its absent value),
/// the score difference is `p(x) − p(x with x_T[j] set absent)`, earlier
/// events untouched. `diff_prob` averages it over those timelines; the
/// weighted variant multiplies by the share of timelines where `j` is
/// present; the ratio variant first divides by the mean present value.
pub fn perturb_scores<F>(score: F, examples: &[Example], names: &[String], absent: &[f64], metric: Metric) -> Result<Vec<FeatureScore>>
where
    F: Fn(&Example) -> f64,
{
    if metric == Metric::LassoCoefficient {
        return Err(Error::config("metric", "coefficient ranking is not a perturbation metric"));
    }
    let d = names.len();
    if absent.len() != d {
        return Err(Error::Shape {
            expected: d,
            got: absent.len(),
        });
    }
    if examples.is_empty() {
        return Err(Error::Empty("timelines".into()));
    }
    let mut diff_sum = alloc::vec![0.0; d];
    let mut value_sum = alloc::vec![0.0; d];
    let mut count = alloc::vec![0usize; d];
    for ex in examples {
        if ex.dim() != d {
            return Err(Error::Shape {
                expected: d,
                got: ex.dim(),
            });
        }
        let base = score(ex);
        let last = ex.len() - 1;
        let mut probe = ex.clone();
        for j in 0..d {
            let v = ex.events[last][j];
            if v == absent[j] {
                continue;
            }
            probe.events[last][j] = absent[j];
            diff_sum[j] += base - score(&probe);
            probe.events[last][j] = v;
            value_sum[j] += v;
            count[j] += 1;
        }
    }
    let n = examples.len() as f64;
    Ok((0..d)
        .map(|j| {
            let occ = count[j] as f64 / n;
            let value = (count[j] > 0)
                .then(|| {
                    let diff = diff_sum[j] / count[j] as f64;
                    match metric {
                        Metric::DiffProb => Some(diff),
                        Metric::DiffProbWeighted => Some(diff * occ),
                        _ => {
                            let mean_present = value_sum[j] / count[j] as f64;
                            (mean_present != 0.0).then(|| diff / mean_present * occ)
                        }
                    }
                })
                .flatten();
            FeatureScore {
                feature: names[j].clone(),
                value,
                occurrence: occ,
            }
        })
        .collect())
}

/// Perturbation table of one model on one set of timelines.
pub fn perturb_importance<F>(score: F, examples: &[Example], names: &[String], absent: &[f64], metric: Metric) -> Result<ImportanceTable>
where
    F: Fn(&Example) -> f64,
{
    Ok(aggregate(metric, &[perturb_scores(score, examples, names, absent, metric)?]))
}

/// Jaccard similarity of the top-`k` feature sets of two tables in one
/// direction, with a warning when `k` exceeds either ranking.
pub fn topk_jaccard(a: &ImportanceTable, b: &ImportanceTable, k: usize, direction: Direction) -> (f64, Option<String>) {
    let sa: Vec<&str> = a.top_k(k, direction).iter().map(|r| r.feature.as_str()).collect();
    let sb: Vec<&str> = b.top_k(k, direction).iter().map(|r| r.feature.as_str()).collect();
    let warning = (sa.len() < k || sb.len() < k)
        .then(|| format!("k = {k} exceeds the ranking ({} and {} features); using all of them", sa.len(), sb.len()));
    (jaccard(&sa, &sb), warning)
}

/// `|A ∩ B| / |A ∪ B|`, 1 for two empty sets.
pub fn jaccard(a: &[&str], b: &[&str]) -> f64 {
    let sa: BTreeMap<&str, ()> = a.iter().map(|x| (*x, ())).collect();
    let sb: BTreeMap<&str, ()> = b.iter().map(|x| (*x, ())).collect();
    let inter = sa.keys().filter(|x| sb.contains_key(*x)).count();
    let union = sa.len() + sb.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
