//! Vocabulary fitting and event vector encoding.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use crate::math::Float;
use crate::claims::{index_mask, Claim, PatientTimeline, N_COMORBIDITIES};
use crate::error::{Error, Result};

pub const DEFAULT_COUNT_THRESHOLD: usize = 5;
pub const BCHRONIC_SIZE: usize = 18;
pub const ECODE_SIZE: usize = 20;
pub const PCLASS_SIZE: usize = 4;
pub const RISK_LEVELS: usize = 5;

pub const COMORBIDITY_NAMES: [&str; N_COMORBIDITIES] = [
    "aids",
    "alcohol",
    "anemdef",
    "arth",
    "bldloss",
    "chf",
    "chrnlung",
    "coag",
    "depress",
    "dm",
    "dmcx",
    "drug",
    "htn_c",
    "hypothy",
    "liver",
    "lymph",
    "lytes",
    "mets",
    "neuro",
    "obese",
    "para",
    "perivasc",
    "psych",
    "pulmcirc",
    "renlfail",
    "tumor",
    "ulcer",
    "valve",
    "wghtloss",
];

fn numbered(from: usize, n: usize) -> Vec<String> {
    (from..from + n).map(|i| i.to_string()).collect()
}

/// Codes of the fixed-size vocabularies.
pub fn bchronic_codes() -> Vec<String> {
    numbered(1, BCHRONIC_SIZE)
}

pub fn ecode_codes() -> Vec<String> {
    numbered(1, ECODE_SIZE)
}

pub fn pclass_codes() -> Vec<String> {
    numbered(1, PCLASS_SIZE)
}

pub fn risk_codes() -> Vec<String> {
    numbered(0, RISK_LEVELS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    OneHot,
    Count,
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub width: usize,
    pub kind: FeatureKind,
}

/// Mean and standard deviation used to standardize a continuous column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub diagnosis: Vec<String>,
    pub procedures: Vec<String>,
    pub bchronic: Vec<String>,
    pub ecode: Vec<String>,
    pub pclass: Vec<String>,
    pub comorbid: Vec<String>,
    pub mdc: Vec<String>,
    pub riskmortal: Vec<String>,
    pub severity: Vec<String>,
    pub income: Vec<String>,
    pub ploc: Vec<String>,
    pub dmonth: Vec<String>,
    pub dispuniform: Vec<String>,
    pub paysrc: Vec<String>,
    pub sameday: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub count_threshold: usize,
    pub vocab: Vocabularies,
    pub layout: Vec<Block>,
    /// Standardization per continuous block, keyed by block name.
    pub scaling: BTreeMap<String, Scaling>,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventVector {
    pub values: Vec<f64>,
    pub index_flag: bool,
}

/// Running timeline context for one event.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PriorSummary {
    /// Index events up to and including the current one.
    pub countindex: u32,
    /// Events up to and including the current one.
    pub countevents: u32,
    pub prev_discharge: Option<i64>,
}

const CONTINUOUS: [&str; 6] = ["age", "los", "delta_t", "n_chronic", "countindex", "countevents"];

fn count_into<'a>(counts: &mut BTreeMap<&'a str, usize>, items: impl IntoIterator<Item = &'a String>) {
    for s in items {
        if !s.is_empty() {
            *counts.entry(s.as_str()).or_default() += 1;
        }
    }
}

/// Categories with at least `threshold` occurrences, in lexicographic order.
fn admitted(counts: &BTreeMap<&str, usize>, threshold: usize) -> Vec<String> {
    counts
        .iter()
        .filter(|(_, &n)| n >= threshold)
        .map(|(k, _)| k.to_string())
        .collect()
}

fn vocab_of<'a, F, I>(events: &[&'a Claim], threshold: usize, field: F) -> Vec<String>
where
    F: Fn(&'a Claim) -> I,
    I: IntoIterator<Item = &'a String>,
{
    let mut counts = BTreeMap::new();
    for e in events {
        count_into(&mut counts, field(e));
    }
    admitted(&counts, threshold)
}

impl FeatureSpec {
    pub fn fit(train: &[PatientTimeline], count_threshold: usize) -> Result<Self> {
        let events: Vec<&Claim> = train.iter().flat_map(|t| t.events.iter()).collect();
        if events.is_empty() {
            return Err(Error::Empty("training timelines".into()));
        }
        let threshold = count_threshold.max(1);
        let vocab = Vocabularies {
            diagnosis: vocab_of(&events, threshold, |c| c.diagnoses.iter()),
            procedures: vocab_of(&events, threshold, |c| c.procedures.iter()),
            bchronic: bchronic_codes(),
            ecode: ecode_codes(),
            pclass: pclass_codes(),
            comorbid: COMORBIDITY_NAMES.iter().map(|s| s.to_string()).collect(),
            mdc: vocab_of(&events, threshold, |c| [&c.mdc]),
            riskmortal: risk_codes(),
            severity: risk_codes(),
            income: vocab_of(&events, threshold, |c| [&c.income_quartile]),
            ploc: vocab_of(&events, threshold, |c| [&c.location]),
            dmonth: vocab_of(&events, threshold, |c| [&c.discharge_month]),
            dispuniform: vocab_of(&events, threshold, |c| [&c.disposition]),
            paysrc: vocab_of(&events, threshold, |c| [&c.pay_source]),
            sameday: vocab_of(&events, threshold, |c| [&c.sameday]),
        };
        if vocab.diagnosis.is_empty() {
            return Err(Error::config(
                "count_threshold",
                format!("no diagnosis category reaches {threshold} occurrences"),
            ));
        }
        let layout = layout_for(&vocab);
        let d = layout.last().map(|b| b.offset + b.width).unwrap_or(0);
        let mut spec = FeatureSpec {
            count_threshold: threshold,
            vocab,
            layout,
            scaling: BTreeMap::new(),
            d,
        };
        spec.scaling = spec.fit_scaling(train);
        Ok(spec)
    }

    fn fit_scaling(&self, train: &[PatientTimeline]) -> BTreeMap<String, Scaling> {
        let mut sums = [0.0f64; CONTINUOUS.len()];
        let mut sq = [0.0f64; CONTINUOUS.len()];
        let mut n = 0.0;
        for tl in train {
            for ev in self.encode_raw(tl) {
                for (k, name) in CONTINUOUS.iter().enumerate() {
                    let v = ev.values[self.block(name).offset];
                    sums[k] += v;
                    sq[k] += v * v;
                }
                n += 1.0;
            }
        }
        CONTINUOUS
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let mean = sums[k] / n;
                let var = (sq[k] / n - mean * mean).max(0.0);
                let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
                (name.to_string(), Scaling { mean, sd })
            })
            .collect()
    }

    pub fn block(&self, name: &str) -> &Block {
        self.layout
            .iter()
            .find(|b| b.name == name)
            .unwrap_or_else(|| panic!("unknown feature block {name}"))
    }

    /// Kind of each of the `d` columns.
    pub fn column_kinds(&self) -> Vec<FeatureKind> {
        let mut out = Vec::with_capacity(self.d);
        for b in &self.layout {
            out.extend(core::iter::repeat_n(b.kind, b.width));
        }
        out
    }

    /// Human-readable name of each column, e.g. `diag1=108` or `age`.
    pub fn feature_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.d);
        for b in &self.layout {
            match self.block_vocab(&b.name) {
                Some(v) => out.extend(v.iter().map(|c| format!("{}={}", b.name, c))),
                None => out.push(b.name.clone()),
            }
        }
        out
    }

    fn block_vocab(&self, name: &str) -> Option<&[String]> {
        let v = &self.vocab;
        Some(match name {
            "diag1" | "diag2" | "diag3" | "countdiag" => &v.diagnosis,
            "proc1" | "proc2" | "proc3" | "countproc" => &v.procedures,
            "bchronic1" | "bchronic2" | "bchronic3" | "countbchronic" => &v.bchronic,
            "ecode1" | "countecode" => &v.ecode,
            "countpclass" => &v.pclass,
            "comorbid" => &v.comorbid,
            "mdc" => &v.mdc,
            "riskmortal" => &v.riskmortal,
            "severity" => &v.severity,
            "income" => &v.income,
            "ploc" => &v.ploc,
            "dmonth" => &v.dmonth,
            "dispuniform" => &v.dispuniform,
            "paysrc" => &v.paysrc,
            "sameday" => &v.sameday,
            _ => return None,
        })
    }

    /// Encode one claim without standardization.
    pub fn encode_event(&self, claim: &Claim, prior: &PriorSummary) -> EventVector {
        let mut x = vec![0.0; self.d];
        let mut one_hot = |block: &str, code: Option<&String>| {
            if let Some(code) = code {
                let b = self.block(block);
                if let Some(j) = self.position(block, code) {
                    x[b.offset + j] = 1.0;
                }
            }
        };
        one_hot("diag1", claim.diagnoses.first());
        one_hot("diag2", claim.diagnoses.get(1));
        one_hot("diag3", claim.diagnoses.get(2));
        one_hot("proc1", claim.procedures.first());
        one_hot("proc2", claim.procedures.get(1));
        one_hot("proc3", claim.procedures.get(2));
        one_hot("bchronic1", claim.chronic.first());
        one_hot("bchronic2", claim.chronic.get(1));
        one_hot("bchronic3", claim.chronic.get(2));
        one_hot("ecode1", claim.ecodes.first());
        one_hot("mdc", Some(&claim.mdc));
        one_hot("riskmortal", Some(&claim.risk_mortality));
        one_hot("severity", Some(&claim.severity));
        one_hot("income", Some(&claim.income_quartile));
        one_hot("ploc", Some(&claim.location));
        one_hot("dmonth", Some(&claim.discharge_month));
        one_hot("dispuniform", Some(&claim.disposition));
        one_hot("paysrc", Some(&claim.pay_source));
        one_hot("sameday", Some(&claim.sameday));

        let mut count = |block: &str, codes: &[String]| {
            let off = self.block(block).offset;
            for c in codes {
                if let Some(j) = self.position(block, c) {
                    x[off + j] += 1.0;
                }
            }
        };
        count("countdiag", &claim.diagnoses);
        count("countproc", &claim.procedures);
        count("countbchronic", &claim.chronic);
        count("countecode", &claim.ecodes);
        count("countpclass", &claim.procedure_classes);

        let off = self.block("comorbid").offset;
        for (j, &f) in claim.comorbidities.iter().enumerate() {
            x[off + j] = f as u8 as f64;
        }
        let delta_t = prior.prev_discharge.map_or(0, |d| claim.admit_day - d);
        let scalars = [
            ("or_proc", claim.or_proc as u8 as f64),
            ("n_chronic", claim.n_chronic as f64),
            ("age", claim.age as f64),
            ("gender", claim.female as u8 as f64),
            ("resident", claim.resident as u8 as f64),
            ("los", claim.los as f64),
            ("delta_t", delta_t as f64),
            ("aweekend", claim.aweekend as u8 as f64),
            ("elective", claim.elective as u8 as f64),
            ("rehab", claim.rehab as u8 as f64),
            ("countindex", prior.countindex as f64),
            ("countevents", prior.countevents as f64),
        ];
        for (name, v) in scalars {
            x[self.block(name).offset] = v;
        }
        EventVector {
            values: x,
            index_flag: claim.primary_hf,
        }
    }

    fn position(&self, block: &str, code: &str) -> Option<usize> {
        if code.is_empty() {
            return None;
        }
        let vocab = self.block_vocab(block)?;
        if block == "comorbid" {
            return None;
        }
        // data-driven vocabularies are sorted; fixed ones are short
        vocab.iter().position(|c| c == code)
    }

    fn encode_raw(&self, tl: &PatientTimeline) -> Vec<EventVector> {
        let mut prior = PriorSummary::default();
        let mut out = Vec::with_capacity(tl.len());
        for e in &tl.events {
            prior.countevents += 1;
            prior.countindex += e.primary_hf as u32;
            out.push(self.encode_event(e, &prior));
            prior.prev_discharge = Some(e.discharge_day);
        }
        out
    }

    /// Standardize the continuous columns in place.
    pub fn standardize(&self, values: &mut [f64]) {
        for (name, s) in &self.scaling {
            let off = self.block(name).offset;
            values[off] = (values[off] - s.mean) / s.sd;
        }
    }

    /// Model-ready vectors for a whole timeline (continuous columns standardized).
    pub fn encode_timeline(&self, tl: &PatientTimeline) -> Vec<EventVector> {
        let mut out = self.encode_raw(tl);
        for ev in out.iter_mut() {
            self.standardize(&mut ev.values);
        }
        out
    }
}

fn layout_for(v: &Vocabularies) -> Vec<Block> {
    use FeatureKind::*;
    let spec: Vec<(&str, usize, FeatureKind)> = vec![
        ("diag1", v.diagnosis.len(), OneHot),
        ("diag2", v.diagnosis.len(), OneHot),
        ("diag3", v.diagnosis.len(), OneHot),
        ("countdiag", v.diagnosis.len(), Count),
        ("proc1", v.procedures.len(), OneHot),
        ("proc2", v.procedures.len(), OneHot),
        ("proc3", v.procedures.len(), OneHot),
        ("countproc", v.procedures.len(), Count),
        ("bchronic1", v.bchronic.len(), OneHot),
        ("bchronic2", v.bchronic.len(), OneHot),
        ("bchronic3", v.bchronic.len(), OneHot),
        ("countbchronic", v.bchronic.len(), Count),
        ("ecode1", v.ecode.len(), OneHot),
        ("countecode", v.ecode.len(), Count),
        ("countpclass", v.pclass.len(), Count),
        ("comorbid", v.comorbid.len(), Binary),
        ("mdc", v.mdc.len(), OneHot),
        ("riskmortal", v.riskmortal.len(), OneHot),
        ("severity", v.severity.len(), OneHot),
        ("or_proc", 1, Binary),
        ("n_chronic", 1, Continuous),
        ("age", 1, Continuous),
        ("gender", 1, Binary),
        ("income", v.income.len(), OneHot),
        ("ploc", v.ploc.len(), OneHot),
        ("resident", 1, Binary),
        ("los", 1, Continuous),
        ("delta_t", 1, Continuous),
        ("aweekend", 1, Binary),
        ("dmonth", v.dmonth.len(), OneHot),
        ("dispuniform", v.dispuniform.len(), OneHot),
        ("paysrc", v.paysrc.len(), OneHot),
        ("sameday", v.sameday.len(), OneHot),
        ("elective", 1, Binary),
        ("rehab", 1, Binary),
        ("countindex", 1, Continuous),
        ("countevents", 1, Continuous),
    ];
    let mut off = 0;
    spec.into_iter()
        .map(|(name, width, kind)| {
            let b = Block {
                name: name.to_string(),
                offset: off,
                width,
                kind,
            };
            off += width;
            b
        })
        .collect()
}

/// A featurized timeline ready for training and scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    /// T × d standardized event vectors.
    pub events: Vec<Vec<f64>>,
    /// 30-day gap label of every event.
    pub targets: Vec<u8>,
    pub index_mask: Vec<bool>,
}

impl Example {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.events.first().map_or(0, |e| e.len())
    }

    /// Outcome of the final (last HF) event.
    pub fn label(&self) -> u8 {
        *self.targets.last().expect("non-empty example")
    }

    pub fn last_event(&self) -> &[f64] {
        self.events.last().expect("non-empty example")
    }
}

pub fn to_example(spec: &FeatureSpec, tl: &PatientTimeline) -> Example {
    Example {
        id: tl.patient_id.clone(),
        events: spec.encode_timeline(tl).into_iter().map(|e| e.values).collect(),
        targets: tl.gap_labels.iter().map(|&y| y as u8).collect(),
        index_mask: index_mask(tl),
    }
}

pub fn to_examples(spec: &FeatureSpec, timelines: &[PatientTimeline]) -> Vec<Example> {
    timelines.iter().map(|t| to_example(spec, t)).collect()
}
