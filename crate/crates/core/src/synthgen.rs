//! Synthetic claims cohorts with controllable history dependence.
//!
//! Each patient is generated from its own seed stream. A skeleton fixes the
//! timeline length, which events are HF admissions, a few risk-relevant
//! comorbidity flags and the readmission outcome of every event; the claim
//! details are filled in afterwards from marginal distributions.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Geometric, Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::claims::{build_timelines, Claim, N_COMORBIDITIES};
use crate::error::{Error, Result};
use crate::math::normal_cdf;
#[allow(unused_imports)]
use crate::math::Float;
use crate::numerics::sigmoid;
use crate::rng::{child_rng, derive_seed, Rng};

/// Comorbidity columns that raise the risk of the current event.
pub const RISK_FLAGS: [usize; 3] = [24, 6, 9];
/// Comorbidity columns whose occurrence at earlier events raises later risk.
pub const HISTORY_FLAGS: [usize; 2] = [16, 2];
/// Comorbidity column that marks readmission at the final event in
/// separable cohorts.
pub const PLANTED_FLAG: usize = 28;

pub const HF_CODE: &str = "108";

const PILOT_STREAM: u64 = 0x5eed_0001;
const PILOT_PATIENTS: usize = 20_000;

/// Display labels for the most frequent codes.
const DIAGNOSIS_LABELS: [(&str, &str); 5] = [
    ("108", "Congestive heart failure; non-hypertensive"),
    ("101", "Coronary atherosclerosis and other heart disease"),
    ("259", "Residual codes"),
    ("106", "Cardiac dysrhythmias"),
    ("158", "Chronic kidney disease"),
];
const PROCEDURE_LABELS: [(&str, &str); 5] = [
    ("47", "Diagnostic cardiac catheterization; coronary arteriography"),
    ("216", "Respiratory intubation and mechanical ventilation"),
    ("222", "Blood transfusion"),
    ("193", "Diagnostic ultrasound of heart (echocardiogram)"),
    ("58", "Hemodialysis"),
];
const PAY_SOURCES: [(&str, f64); 6] = [
    ("Medicare", 0.764),
    ("Private insurance", 0.0923),
    ("Medicaid", 0.0919),
    ("Self-pay", 0.0255),
    ("Other", 0.0231),
    ("No charge", 0.0029),
];

pub fn category_label(code: &str) -> Option<&'static str> {
    DIAGNOSIS_LABELS
        .iter()
        .chain(PROCEDURE_LABELS.iter())
        .find(|(c, _)| *c == code)
        .map(|(_, l)| *l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Cardinalities {
    pub diagnosis: usize,
    pub procedures: usize,
    pub mdc: usize,
    pub income: usize,
    pub location: usize,
    pub disposition: usize,
    pub sameday: usize,
}

impl Default for Cardinalities {
    fn default() -> Self {
        Cardinalities {
            diagnosis: 40,
            procedures: 25,
            mdc: 20,
            income: 4,
            location: 6,
            disposition: 6,
            sameday: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub n_patients: usize,
    pub seed: u64,
    pub mean_timeline_len: f64,
    /// Reported for reference; the truncated geometric fixes the spread.
    pub sd_timeline_len: f64,
    pub max_timeline_len: usize,
    /// Share of HF events followed by a readmission within 30 days.
    pub target_readmit_rate: f64,
    pub mean_age: f64,
    pub sd_age: f64,
    pub frac_female: f64,
    /// Probability that an event before the final one is an HF admission.
    pub earlier_hf_prob: f64,
    pub cardinalities: Cardinalities,
    /// Log-odds added per current risk flag.
    pub flag_effect: f64,
    /// Log-odds added per unit of history: each prior event, prior
    /// readmission and prior occurrence of a designated history flag.
    pub history_effect: f64,
    /// Prevalence of each risk and history flag per event.
    pub flag_prevalence: f64,
    /// Plant a flag at the final event exactly when it is readmitted.
    pub separable: bool,
    /// Chance of a non-readmission claim after the final HF event.
    pub trailing_claim_prob: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_patients: 10_000,
            seed: 7,
            mean_timeline_len: 1.88,
            sd_timeline_len: 1.4,
            max_timeline_len: 12,
            target_readmit_rate: 0.2361,
            mean_age: 72.89,
            sd_age: 14.0,
            frac_female: 0.49,
            earlier_hf_prob: 0.294,
            cardinalities: Cardinalities::default(),
            flag_effect: 0.6,
            history_effect: 0.5,
            flag_prevalence: 0.25,
            separable: false,
            trailing_claim_prob: 0.3,
        }
    }
}

fn check_prob(field: &str, v: f64, open: bool) -> Result<()> {
    let ok = if open { v > 0.0 && v < 1.0 } else { (0.0..=1.0).contains(&v) };
    if ok && v.is_finite() {
        Ok(())
    } else {
        let range = if open { "(0, 1)" } else { "[0, 1]" };
        Err(Error::config(field, format!("{v} is outside {range}")))
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::config("n_patients", "must be at least 1"));
        }
        check_prob("target_readmit_rate", self.target_readmit_rate, true)?;
        check_prob("frac_female", self.frac_female, false)?;
        check_prob("earlier_hf_prob", self.earlier_hf_prob, false)?;
        check_prob("flag_prevalence", self.flag_prevalence, false)?;
        check_prob("trailing_claim_prob", self.trailing_claim_prob, false)?;
        if self.max_timeline_len == 0 {
            return Err(Error::config("max_timeline_len", "must be at least 1"));
        }
        if !(self.mean_timeline_len >= 1.0 && self.mean_timeline_len < (self.max_timeline_len as f64 + 1.0) / 2.0) {
            return Err(Error::config(
                "mean_timeline_len",
                format!(
                    "{} is not reachable with lengths 1..={}",
                    self.mean_timeline_len, self.max_timeline_len
                ),
            ));
        }
        if !(self.sd_age > 0.0 && self.mean_age >= 18.0 && self.mean_age <= 105.0) {
            return Err(Error::config("mean_age", "age distribution must be centred in [18, 105] with sd > 0"));
        }
        let c = &self.cardinalities;
        let cards = [
            ("cardinalities.diagnosis", c.diagnosis),
            ("cardinalities.procedures", c.procedures),
            ("cardinalities.mdc", c.mdc),
            ("cardinalities.income", c.income),
            ("cardinalities.location", c.location),
            ("cardinalities.disposition", c.disposition),
            ("cardinalities.sameday", c.sameday),
        ];
        for (name, v) in cards {
            if v < 2 {
                return Err(Error::config(name, "cardinality must be at least 2"));
            }
        }
        if c.diagnosis < DIAGNOSIS_LABELS.len() + 1 || c.procedures < PROCEDURE_LABELS.len() {
            return Err(Error::config("cardinalities", "too few diagnosis or procedure categories"));
        }
        if !self.flag_effect.is_finite() || !self.history_effect.is_finite() {
            return Err(Error::config("history_effect", "effects must be finite"));
        }
        Ok(())
    }

    /// Probabilities of lengths 1..=max under the truncated shifted geometric
    /// whose mean is `mean_timeline_len`.
    pub fn length_distribution(&self) -> Vec<f64> {
        let n = self.max_timeline_len;
        let dist = |p: f64| -> Vec<f64> {
            let w: Vec<f64> = (0..n).map(|k| (1.0 - p).powi(k as i32) * p).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        };
        let mean = |w: &[f64]| w.iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).sum::<f64>();
        // mean decreases in p
        let (mut lo, mut hi) = (1e-9, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean(&dist(mid)) > self.mean_timeline_len {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        dist(0.5 * (lo + hi))
    }

    /// Location of the untruncated normal whose truncation to [18, 105]
    /// has mean `mean_age`.
    fn age_location(&self) -> f64 {
        let (a, b, s) = (18.0, 105.0, self.sd_age);
        let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * core::f64::consts::PI).sqrt();
        let truncated_mean = |mu: f64| {
            let (za, zb) = ((a - mu) / s, (b - mu) / s);
            mu + s * (pdf(za) - pdf(zb)) / (normal_cdf(zb) - normal_cdf(za))
        };
        let (mut lo, mut hi) = (a - 3.0 * s, b + 3.0 * s);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if truncated_mean(mid) < self.mean_age {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SkeletonEvent {
    hf: bool,
    risk: [bool; RISK_FLAGS.len()],
    history: [bool; HISTORY_FLAGS.len()],
    readmit: bool,
}

fn draw_index(rng: &mut Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn skeleton(cfg: &CohortConfig, lengths: &[f64], intercept: f64, rng: &mut Rng) -> Vec<SkeletonEvent> {
    let t_len = draw_index(rng, lengths) + 1;
    let mut events: Vec<SkeletonEvent> = Vec::with_capacity(t_len);
    let mut history = 0.0;
    for t in 0..t_len {
        let hf = t + 1 == t_len || rng.random_bool(cfg.earlier_hf_prob);
        let risk = core::array::from_fn(|_| rng.random_bool(cfg.flag_prevalence));
        let hist = core::array::from_fn(|_| rng.random_bool(cfg.flag_prevalence));
        let u: f64 = rng.random();
        let n_risk = risk.iter().filter(|f| **f).count() as f64;
        let logit = intercept + cfg.flag_effect * n_risk + cfg.history_effect * history;
        let readmit = u < sigmoid(logit);
        history += 1.0 + readmit as u8 as f64 + hist.iter().filter(|f| **f).count() as f64;
        events.push(SkeletonEvent {
            hf,
            risk,
            history: hist,
            readmit,
        });
    }
    events
}

fn hf_rate(cfg: &CohortConfig, lengths: &[f64], intercept: f64) -> f64 {
    let (mut pos, mut n) = (0usize, 0usize);
    for i in 0..PILOT_PATIENTS {
        let mut rng = child_rng(derive_seed(cfg.seed, PILOT_STREAM), i as u64);
        for e in skeleton(cfg, lengths, intercept, &mut rng) {
            if e.hf {
                n += 1;
                pos += e.readmit as usize;
            }
        }
    }
    pos as f64 / n as f64
}

/// Solve the baseline log-odds so the simulated HF-event readmission rate
/// of a seeded pilot cohort hits the target. Common random numbers make the
/// pilot rate monotone in the intercept.
pub fn calibrate_intercept(cfg: &CohortConfig) -> Result<f64> {
    cfg.validate()?;
    let lengths = cfg.length_distribution();
    let (mut lo, mut hi) = (-30.0, 30.0);
    let target = cfg.target_readmit_rate;
    if hf_rate(cfg, &lengths, lo) > target || hf_rate(cfg, &lengths, hi) < target {
        return Err(Error::config(
            "target_readmit_rate",
            format!("{target} is not reachable with the configured effects"),
        ));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if hf_rate(cfg, &lengths, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

struct Vocab {
    diagnosis: Vec<String>,
    procedures: Vec<String>,
}

fn vocab(cfg: &CohortConfig) -> Vocab {
    let mut diagnosis: Vec<String> = DIAGNOSIS_LABELS.iter().map(|(c, _)| c.to_string()).collect();
    let mut code = 1;
    while diagnosis.len() < cfg.cardinalities.diagnosis {
        let s = code.to_string();
        if !diagnosis.contains(&s) {
            diagnosis.push(s);
        }
        code += 3;
    }
    let mut procedures: Vec<String> = PROCEDURE_LABELS.iter().map(|(c, _)| c.to_string()).collect();
    let mut code = 2;
    while procedures.len() < cfg.cardinalities.procedures {
        let s = code.to_string();
        if !procedures.contains(&s) {
            procedures.push(s);
        }
        code += 5;
    }
    Vocab { diagnosis, procedures }
}

/// Zipf-distributed 0-based rank below `n`.
fn zipf(rng: &mut Rng, n: usize) -> usize {
    let z = Zipf::new(n as f64, 1.1).expect("valid zipf");
    (z.sample(rng) as usize).clamp(1, n) - 1
}

fn distinct_zipf(rng: &mut Rng, n: usize, k: usize, exclude: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(k);
    let mut tries = 0;
    while out.len() < k && tries < 20 * k + 20 {
        let i = zipf(rng, n);
        if !out.contains(&i) && !exclude.contains(&i) {
            out.push(i);
        }
        tries += 1;
    }
    out
}

fn month_of(day: i64) -> u32 {
    (day.rem_euclid(365) * 12 / 365) as u32 + 1
}

/// Claims of the `index`-th patient. Deterministic in `(cfg.seed, index)`.
pub fn generate_patient(cfg: &CohortConfig, intercept: f64, index: usize) -> Vec<Claim> {
    let lengths = cfg.length_distribution();
    generate_with(cfg, &lengths, &vocab(cfg), cfg.age_location(), intercept, index)
}

fn generate_with(cfg: &CohortConfig, lengths: &[f64], vocab: &Vocab, age_loc: f64, intercept: f64, index: usize) -> Vec<Claim> {
    let mut rng = child_rng(cfg.seed, index as u64);
    let sk = skeleton(cfg, lengths, intercept, &mut rng);
    let pid = format!("P{index:06}");
    let age_dist = Normal::new(age_loc, cfg.sd_age).expect("valid age distribution");
    let age0 = loop {
        let a = age_dist.sample(&mut rng).round();
        if (18.0..=105.0).contains(&a) {
            break a as u32;
        }
    };
    let female = rng.random_bool(cfg.frac_female);
    let pay = PAY_SOURCES[draw_index(&mut rng, &PAY_SOURCES.map(|p| p.1))].0;
    let income = (rng.random_range(0..cfg.cardinalities.income) + 1).to_string();
    let location = (zipf(&mut rng, cfg.cardinalities.location) + 1).to_string();
    let resident = rng.random_bool(0.95);
    let readmit_gap = |rng: &mut Rng, readmit: bool| -> i64 {
        if readmit {
            rng.random_range(1..=30)
        } else {
            31 + Geometric::new(1.0 / 90.0).expect("valid gap").sample(rng) as i64
        }
    };

    let start: i64 = rng.random_range(0..365);
    let mut admit = start;
    let mut claims = Vec::with_capacity(sk.len() + 1);
    let last = sk.len() - 1;
    for (t, ev) in sk.iter().enumerate() {
        let los = Geometric::new(0.2).expect("valid los").sample(&mut rng) as i64;
        let mut c = Claim::new(pid.clone(), admit, admit + los, ev.hf);
        c.age = age0 + ((admit - start) / 365) as u32;
        c.female = female;
        c.pay_source = pay.to_string();
        c.income_quartile = income.clone();
        c.location = location.clone();
        c.resident = resident;

        let n_diag = rng.random_range(3..=15);
        let hf_rank = 0;
        let primary = if ev.hf {
            hf_rank
        } else {
            distinct_zipf(&mut rng, vocab.diagnosis.len(), 1, &[hf_rank])[0]
        };
        let mut diags = vec![primary];
        diags.extend(distinct_zipf(&mut rng, vocab.diagnosis.len(), n_diag - 1, &[primary]));
        c.diagnoses = diags.iter().map(|&i| vocab.diagnosis[i].clone()).collect();
        let n_proc = rng.random_range(0..=6);
        c.procedures = distinct_zipf(&mut rng, vocab.procedures.len(), n_proc, &[])
            .into_iter()
            .map(|i| vocab.procedures[i].clone())
            .collect();
        c.procedure_classes = (0..c.procedures.len())
            .map(|_| (zipf(&mut rng, 4) + 1).to_string())
            .collect();
        let n_chronic_fields = rng.random_range(0..=10);
        c.chronic = (0..n_chronic_fields).map(|_| (zipf(&mut rng, 18) + 1).to_string()).collect();
        c.n_chronic = n_chronic_fields as u32 + rng.random_range(0..=3);
        if rng.random_bool(0.1) {
            c.ecodes = vec![(zipf(&mut rng, 20) + 1).to_string()];
        }

        let mut flags = [false; N_COMORBIDITIES];
        for (j, f) in flags.iter_mut().enumerate() {
            *f = rng.random_bool(0.1) && j != PLANTED_FLAG;
        }
        for (k, &j) in RISK_FLAGS.iter().enumerate() {
            flags[j] = ev.risk[k];
        }
        for (k, &j) in HISTORY_FLAGS.iter().enumerate() {
            flags[j] = ev.history[k];
        }
        if cfg.separable && t == last {
            flags[PLANTED_FLAG] = ev.readmit;
        }
        c.comorbidities = flags;

        c.mdc = if ev.hf {
            "5".to_string()
        } else {
            (zipf(&mut rng, cfg.cardinalities.mdc) + 1).to_string()
        };
        c.risk_mortality = draw_index(&mut rng, &[0.02, 0.2, 0.4, 0.28, 0.1]).to_string();
        c.severity = draw_index(&mut rng, &[0.02, 0.15, 0.45, 0.3, 0.08]).to_string();
        c.or_proc = rng.random_bool(0.1);
        c.aweekend = rng.random_bool(2.0 / 7.0);
        c.disposition = (zipf(&mut rng, cfg.cardinalities.disposition) + 1).to_string();
        c.sameday = (zipf(&mut rng, cfg.cardinalities.sameday).min(2)).to_string();
        c.elective = rng.random_bool(0.1);
        c.rehab = rng.random_bool(0.02);
        admit = c.discharge_day + readmit_gap(&mut rng, ev.readmit);
        claims.push(c);
    }

    // the claim after the final HF event only matters for its admit day
    let final_readmit = sk[last].readmit;
    if final_readmit || rng.random_bool(cfg.trailing_claim_prob) {
        let los = rng.random_range(0..=6);
        let mut c = Claim::new(pid.clone(), admit, admit + los, false);
        let last_claim = &claims[last];
        c.age = last_claim.age;
        c.female = female;
        c.pay_source = pay.to_string();
        c.income_quartile = income.clone();
        c.location = location.clone();
        c.resident = resident;
        c.diagnoses = vec![vocab.diagnosis[distinct_zipf(&mut rng, vocab.diagnosis.len(), 1, &[0])[0]].clone()];
        c.mdc = (zipf(&mut rng, cfg.cardinalities.mdc) + 1).to_string();
        c.risk_mortality = "1".into();
        c.severity = "1".into();
        c.disposition = "1".into();
        c.sameday = "0".into();
        claims.push(c);
    }

    // keep the final HF discharge out of December
    let shift = if month_of(claims[last].discharge_day) == 12 { -31 } else { 0 };
    for c in claims.iter_mut() {
        c.admit_day += shift;
        c.discharge_day += shift;
        c.discharge_month = month_of(c.discharge_day).to_string();
    }
    claims
}

/// Generate a whole cohort, patients in index order.
pub fn generate(cfg: &CohortConfig) -> Result<Vec<Claim>> {
    let intercept = calibrate_intercept(cfg)?;
    let lengths = cfg.length_distribution();
    let vocab = vocab(cfg);
    let age_loc = cfg.age_location();
    Ok((0..cfg.n_patients)
        .flat_map(|i| generate_with(cfg, &lengths, &vocab, age_loc, intercept, i))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub code: String,
    pub label: Option<String>,
    pub count: usize,
    pub share: f64,
}

/// Reference values of the real cohort, for side-by-side display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCohort {
    pub n_patients: usize,
    pub age_mean: f64,
    pub age_sd: f64,
    pub frac_female: f64,
    pub hf_event_share: f64,
    pub readmission_rate: f64,
    pub timeline_len_mean: f64,
    pub timeline_len_sd: f64,
}

pub const REFERENCE: ReferenceCohort = ReferenceCohort {
    n_patients: 272_778,
    age_mean: 72.89,
    age_sd: 14.0,
    frac_female: 0.49,
    hf_event_share: 0.6694,
    readmission_rate: 0.2361,
    timeline_len_mean: 1.88,
    timeline_len_sd: 1.4,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n_patients: usize,
    pub n_claims: usize,
    pub n_excluded: usize,
    pub age_mean: f64,
    pub age_sd: f64,
    pub frac_female: f64,
    pub pay_source: Vec<CategoryCount>,
    /// HF admissions over all timeline events.
    pub hf_event_share: f64,
    pub n_index_events: usize,
    /// 30-day readmissions over HF events.
    pub readmission_rate: f64,
    pub last_event_readmission_rate: f64,
    pub timeline_len_mean: f64,
    pub timeline_len_sd: f64,
    pub top_diagnoses: Vec<CategoryCount>,
    pub top_procedures: Vec<CategoryCount>,
    pub reference: ReferenceCohort,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

fn ranked(counts: BTreeMap<String, usize>, total: usize, k: usize) -> Vec<CategoryCount> {
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter()
        .take(k)
        .map(|(code, count)| CategoryCount {
            label: category_label(&code).map(String::from),
            share: count as f64 / total.max(1) as f64,
            code,
            count,
        })
        .collect()
}

/// Table-1 style description of a cohort, computed over the timelines that
/// pass inclusion.
pub fn summarize(claims: &[Claim]) -> Result<CohortSummary> {
    if claims.is_empty() {
        return Err(Error::Empty("claims".into()));
    }
    let built = build_timelines(claims);
    let tls = &built.timelines;
    if tls.is_empty() {
        return Err(Error::Empty("no timeline passes inclusion".into()));
    }
    let ages: Vec<f64> = tls.iter().map(|t| t.events[0].age as f64).collect();
    let (age_mean, age_sd) = mean_sd(&ages);
    let lens: Vec<f64> = tls.iter().map(|t| t.len() as f64).collect();
    let (timeline_len_mean, timeline_len_sd) = mean_sd(&lens);
    let events: Vec<&Claim> = tls.iter().flat_map(|t| t.events.iter()).collect();
    let n_events = events.len();
    let mut pay = BTreeMap::new();
    let mut diag = BTreeMap::new();
    let mut proc = BTreeMap::new();
    let (mut n_diag, mut n_proc) = (0, 0);
    for e in &events {
        *pay.entry(e.pay_source.clone()).or_insert(0) += 1;
        for d in &e.diagnoses {
            *diag.entry(d.clone()).or_insert(0) += 1;
            n_diag += 1;
        }
        for p in &e.procedures {
            *proc.entry(p.clone()).or_insert(0) += 1;
            n_proc += 1;
        }
    }
    let index_labels: Vec<bool> = tls.iter().flat_map(|t| t.labels.iter().flatten().copied()).collect();
    let n_index = index_labels.len();
    let n_pay = pay.len();
    Ok(CohortSummary {
        n_patients: tls.len(),
        n_claims: claims.len(),
        n_excluded: built.exclusions.len(),
        age_mean,
        age_sd,
        frac_female: tls.iter().filter(|t| t.events[0].female).count() as f64 / tls.len() as f64,
        pay_source: ranked(pay, n_events, n_pay),
        hf_event_share: n_index as f64 / n_events as f64,
        n_index_events: n_index,
        readmission_rate: index_labels.iter().filter(|y| **y).count() as f64 / n_index as f64,
        last_event_readmission_rate: tls.iter().filter(|t| t.last_label()).count() as f64 / tls.len() as f64,
        timeline_len_mean,
        timeline_len_sd,
        top_diagnoses: ranked(diag, n_diag, 5),
        top_procedures: ranked(proc, n_proc, 5),
        reference: REFERENCE,
    })
}

/// Dense design with `informative` signal columns followed by `noise`
/// columns, all standard normal; labels from a logistic model on the signal
/// columns with alternating-sign unit-scale coefficients.
pub fn planted_design(n: usize, informative: usize, noise: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = child_rng(seed, 0x1a55_0000);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let coef: Vec<f64> = (0..informative)
        .map(|j| if j % 2 == 0 { 1.5 } else { -1.5 })
        .collect();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..informative + noise).map(|_| normal.sample(&mut rng)).collect();
        let z: f64 = coef.iter().zip(&x).map(|(c, v)| c * v).sum();
        ys.push(rng.random_bool(sigmoid(z)) as u8);
        xs.push(x);
    }
    (xs, ys)
}
