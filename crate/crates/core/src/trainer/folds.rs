use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::claims::PatientTimeline;
use crate::error::{Error, Result};
use crate::rng::{child_rng, derive_seed};

/// One cross-validation split. Indices refer to `FoldPlan::ids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    /// Training patients excluding the validation carve-out.
    pub train: Vec<usize>,
    /// Held-out share of the training patients used for epoch selection.
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Fold {
    /// Training and validation patients together.
    pub fn train_all(&self) -> Vec<usize> {
        let mut v = self.train.clone();
        v.extend_from_slice(&self.validation);
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn ids_of(&self, idx: &[usize]) -> Vec<&str> {
        idx.iter().map(|&i| self.ids[i].as_str()).collect()
    }
}

fn by_class(indices: &[usize], labels: &[u8]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for &i in indices {
        out[(labels[i] == 1) as usize].push(i);
    }
    out
}

/// Split `indices` into a kept part and a stratified held-out share of
/// `fraction`, with at least one member of each class on both sides.
pub fn stratified_holdout(indices: &[usize], labels: &[u8], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config("fraction", format!("{fraction} is outside (0, 1)")));
    }
    let mut keep = Vec::new();
    let mut held = Vec::new();
    for (c, mut members) in by_class(indices, labels).into_iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::SingleClass(format!(
                "class {c} has {} member(s); a stratified split needs at least 2",
                members.len()
            )));
        }
        members.shuffle(&mut child_rng(seed, c as u64));
        let n_held = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len() - 1);
        held.extend_from_slice(&members[..n_held]);
        keep.extend_from_slice(&members[n_held..]);
    }
    keep.sort_unstable();
    held.sort_unstable();
    Ok((keep, held))
}

/// A stratified subset holding `fraction` of each class.
pub fn stratified_subset(indices: &[usize], labels: &[u8], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    Ok(stratified_holdout(indices, labels, fraction, seed)?.1)
}

/// Stratified k-fold split on the final-event outcome. Patients of each
/// class are shuffled and dealt round-robin, continuing across classes, so
/// fold sizes and per-fold class counts each differ by at most one.
pub fn make_folds(timelines: &[PatientTimeline], k: usize, validation_fraction: f64, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::config("k", format!("{k}: need at least 2 folds")));
    }
    let labels: Vec<u8> = timelines.iter().map(|t| t.last_label() as u8).collect();
    let all: Vec<usize> = (0..timelines.len()).collect();
    let classes = by_class(&all, &labels);
    for (c, members) in classes.iter().enumerate() {
        if members.len() < k {
            return Err(Error::SingleClass(format!(
                "class {c} has {} patient(s), fewer than the {k} folds",
                members.len()
            )));
        }
    }
    let mut test: Vec<Vec<usize>> = alloc::vec![Vec::new(); k];
    let mut slot = 0;
    for (c, mut members) in classes.into_iter().enumerate().rev() {
        members.shuffle(&mut child_rng(seed, c as u64));
        for i in members {
            test[slot % k].push(i);
            slot += 1;
        }
    }
    let mut folds = Vec::with_capacity(k);
    for (f, mut t) in test.into_iter().enumerate() {
        t.sort_unstable();
        let mut in_test = alloc::vec![false; timelines.len()];
        t.iter().for_each(|&i| in_test[i] = true);
        let rest: Vec<usize> = all.iter().copied().filter(|&i| !in_test[i]).collect();
        let (train, validation) =
            stratified_holdout(&rest, &labels, validation_fraction, derive_seed(seed, 100 + f as u64))?;
        folds.push(Fold {
            index: f,
            train,
            validation,
            test: t,
        });
    }
    Ok(FoldPlan {
        k,
        seed,
        validation_fraction,
        ids: timelines.iter().map(|t| t.patient_id.clone()).collect(),
        labels,
        folds,
    })
}

/// `w_c = N / (2 n_c)`.
pub fn class_weights(labels: &[u8]) -> Result<[f64; 2]> {
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass("class weights need both outcome classes".into()));
    }
    let n = labels.len() as f64;
    Ok([n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::{label_timeline, Claim};
    use crate::featurizer::Example;
    use crate::feedforward::Design;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    pub(crate) fn toy_timelines(labels: &[bool]) -> Vec<PatientTimeline> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let id = format!("p{i:04}");
                let mut c = Claim::new(id.clone(), 10, 14, true);
                c.age = 70;
                let next = if y { 30 } else { 200 };
                label_timeline(PatientTimeline {
                    patient_id: id,
                    events: vec![c],
                    labels: vec![],
                    gap_labels: vec![],
                    lookahead_admit: Some(next),
                })
            })
            .collect()
    }

    #[test]
    fn divisible_folds_are_exact() {
        let labels: Vec<bool> = (0..100).map(|i| i < 20).collect();
        let tls = toy_timelines(&labels);
        assert!(tls.iter().filter(|t| t.last_label()).count() == 20);
        let plan = make_folds(&tls, 5, 0.1, 3).unwrap();
        for f in &plan.folds {
            assert_eq!(f.test.iter().filter(|&&i| plan.labels[i] == 1).count(), 4);
            assert_eq!(f.test.len(), 20);
        }
        assert_eq!(plan, make_folds(&tls, 5, 0.1, 3).unwrap());
        assert_ne!(plan, make_folds(&tls, 5, 0.1, 4).unwrap());
    }

    #[test]
    fn too_few_positives() {
        let labels: Vec<bool> = (0..50).map(|i| i < 4).collect();
        assert!(matches!(make_folds(&toy_timelines(&labels), 5, 0.1, 0), Err(Error::SingleClass(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn folds_partition_and_stratify(n in 20usize..150, pos_share in 0.1f64..0.6, k in 2usize..6, seed in 0u64..1000) {
            let labels: Vec<bool> = (0..n).map(|i| (i as f64) < pos_share * n as f64).collect();
            let tls = toy_timelines(&labels);
            let n_pos = labels.iter().filter(|&&y| y).count();
            prop_assume!(n_pos >= k.max(3) * 2 && n - n_pos >= k.max(3) * 2);
            let plan = make_folds(&tls, k, 0.1, seed).unwrap();
            let mut seen = vec![0usize; n];
            let sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let prevalence = n_pos as f64 / n as f64;
            for f in &plan.folds {
                for &i in &f.test {
                    seen[i] += 1;
                }
                let mut train = f.train_all();
                train.extend_from_slice(&f.test);
                train.sort_unstable();
                prop_assert_eq!(train, (0..n).collect::<Vec<_>>());
                prop_assert!(f.train.iter().all(|i| !f.test.contains(i) && !f.validation.contains(i)));
                let pos = f.test.iter().filter(|&&i| plan.labels[i] == 1).count() as f64;
                prop_assert!((pos - prevalence * f.test.len() as f64).abs() < 1.0 + 1e-9);
                for part in [&f.train, &f.validation] {
                    prop_assert!(part.iter().any(|&i| plan.labels[i] == 1));
                    prop_assert!(part.iter().any(|&i| plan.labels[i] == 0));
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn weights_formula() {
        let mut labels = vec![0u8; 900];
        labels.extend(vec![1u8; 100]);
        let w = class_weights(&labels).unwrap();
        assert!((w[0] - 1000.0 / 1800.0).abs() < 1e-15);
        assert_eq!(w[1], 5.0);
        assert_eq!(class_weights(&[0, 1, 1, 0]).unwrap(), [1.0, 1.0]);
        assert!(class_weights(&[1, 1]).is_err());
    }

    #[test]
    fn weighted_loss_equals_duplication() {
        // 8 negatives, 2 positives: each positive duplicated 4 times
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64).cos()]).collect();
        let ys: Vec<u8> = (0..10).map(|i| (i >= 8) as u8).collect();
        let w = class_weights(&ys).unwrap();
        let ex = |x: &Vec<f64>, y: u8| Example {
            id: "x".into(),
            events: vec![x.clone()],
            targets: vec![y],
            index_mask: vec![true],
        };
        let weighted: Vec<Example> = xs.iter().zip(&ys).map(|(x, &y)| ex(x, y)).collect();
        let mut dup = Vec::new();
        for (x, &y) in xs.iter().zip(&ys) {
            for _ in 0..if y == 1 { 4 } else { 1 } {
                dup.push(ex(x, y));
            }
        }
        fn refs(v: &[Example]) -> Vec<&Example> {
            v.iter().collect()
        }
        let a = Design::new(&refs(&weighted), 2, w).unwrap().loss(&[0.3, -0.8], 0.1);
        let b = Design::new(&refs(&dup), 2, [1.0, 1.0]).unwrap().loss(&[0.3, -0.8], 0.1);
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}
