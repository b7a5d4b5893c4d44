//! Claims, patient timelines and the 30-day readmission labels.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIAGNOSES: usize = 25;
pub const MAX_PROCEDURES: usize = 15;
pub const MAX_CHRONIC: usize = 25;
pub const MAX_ECODES: usize = 4;
pub const MAX_PROCEDURE_CLASSES: usize = 15;
pub const N_COMORBIDITIES: usize = 29;
pub const READMIT_WINDOW_DAYS: i64 = 30;
pub const MIN_AGE: u32 = 18;

/// One hospitalization record. Categorical fields hold raw category codes;
/// an empty string means the field was not recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub patient_id: String,
    pub admit_day: i64,
    pub discharge_day: i64,
    pub primary_hf: bool,
    pub diagnoses: Vec<String>,
    pub procedures: Vec<String>,
    pub chronic: Vec<String>,
    pub ecodes: Vec<String>,
    pub procedure_classes: Vec<String>,
    pub comorbidities: [bool; N_COMORBIDITIES],
    pub mdc: String,
    pub risk_mortality: String,
    pub severity: String,
    pub or_proc: bool,
    pub n_chronic: u32,
    pub age: u32,
    pub female: bool,
    pub income_quartile: String,
    pub location: String,
    pub resident: bool,
    pub los: i64,
    pub aweekend: bool,
    pub discharge_month: String,
    pub disposition: String,
    pub pay_source: String,
    pub sameday: String,
    pub elective: bool,
    pub rehab: bool,
}

impl Claim {
    /// A minimal valid claim; every optional field is empty or false.
    pub fn new(patient_id: impl Into<String>, admit_day: i64, discharge_day: i64, primary_hf: bool) -> Self {
        Claim {
            patient_id: patient_id.into(),
            admit_day,
            discharge_day,
            primary_hf,
            diagnoses: Vec::new(),
            procedures: Vec::new(),
            chronic: Vec::new(),
            ecodes: Vec::new(),
            procedure_classes: Vec::new(),
            comorbidities: [false; N_COMORBIDITIES],
            mdc: String::new(),
            risk_mortality: String::new(),
            severity: String::new(),
            or_proc: false,
            n_chronic: 0,
            age: 70,
            female: false,
            income_quartile: String::new(),
            location: String::new(),
            resident: true,
            los: discharge_day - admit_day,
            aweekend: false,
            discharge_month: String::from("6"),
            disposition: String::new(),
            pay_source: String::new(),
            sameday: String::new(),
            elective: false,
            rehab: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.discharge_day < self.admit_day {
            return Err(Error::Invalid(format!(
                "claim for {}: discharge day {} precedes admit day {}",
                self.patient_id, self.discharge_day, self.admit_day
            )));
        }
        if self.los != self.discharge_day - self.admit_day {
            return Err(Error::Invalid(format!(
                "claim for {}: los {} != discharge - admit = {}",
                self.patient_id,
                self.los,
                self.discharge_day - self.admit_day
            )));
        }
        let lists = [
            ("diagnoses", self.diagnoses.len(), MAX_DIAGNOSES),
            ("procedures", self.procedures.len(), MAX_PROCEDURES),
            ("chronic", self.chronic.len(), MAX_CHRONIC),
            ("ecodes", self.ecodes.len(), MAX_ECODES),
            ("procedure_classes", self.procedure_classes.len(), MAX_PROCEDURE_CLASSES),
        ];
        for (name, len, max) in lists {
            if len > max {
                return Err(Error::Invalid(format!(
                    "claim for {}: {name} has {len} entries (max {max})",
                    self.patient_id
                )));
            }
        }
        Ok(())
    }

    /// Discharge month parsed as 1..=12, if it is numeric.
    pub fn month(&self) -> Option<u32> {
        self.discharge_month.trim().parse().ok().filter(|m| (1..=12).contains(m))
    }

    /// An HF admission that can anchor a 30-day readmission outcome: adult
    /// patient and a discharge month early enough for a full look-ahead.
    pub fn is_eligible_index(&self) -> bool {
        self.primary_hf && self.age >= MIN_AGE && self.month() != Some(12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTimeline {
    pub patient_id: String,
    pub events: Vec<Claim>,
    /// Readmission outcome at index events, `None` at non-index events.
    pub labels: Vec<Option<bool>>,
    /// The same 30-day gap rule applied to every event. Training targets for
    /// objectives that also score non-index events.
    pub gap_labels: Vec<bool>,
    /// Admit day of the first raw claim after the final event, if any.
    pub lookahead_admit: Option<i64>,
}

impl PatientTimeline {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Outcome of the final (last HF) event.
    pub fn last_label(&self) -> bool {
        self.gap_labels.last().copied().unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ExclusionReason {
    /// No HF admission at age ≥ 18 discharged January to November.
    NoEligibleIndex,
    /// A stay begins before the previous one ended.
    OverlappingStays { admit_day: i64, previous_discharge_day: i64 },
    InvalidClaim { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub patient_id: String,
    #[serde(flatten)]
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildOutcome {
    pub timelines: Vec<PatientTimeline>,
    pub exclusions: Vec<Exclusion>,
}

fn sort_events(events: &mut [Claim]) {
    events.sort_by_key(|a| (a.admit_day, a.discharge_day));
}

/// Group claims by patient, apply the inclusion rules, sort and label.
/// Timelines end at the last eligible HF event; the claim following it (if
/// any) only supplies the look-ahead admission for the final label.
/// Output is ordered by patient id.
pub fn build_timelines(claims: &[Claim]) -> BuildOutcome {
    let mut by_patient: BTreeMap<&str, Vec<Claim>> = BTreeMap::new();
    for c in claims {
        by_patient.entry(c.patient_id.as_str()).or_default().push(c.clone());
    }
    let mut out = BuildOutcome::default();
    for (pid, mut events) in by_patient {
        let exclude = |reason| Exclusion {
            patient_id: String::from(pid),
            reason,
        };
        if let Some(e) = events.iter().find_map(|c| c.validate().err()) {
            out.exclusions.push(exclude(ExclusionReason::InvalidClaim {
                message: format!("{e}"),
            }));
            continue;
        }
        sort_events(&mut events);
        let overlap = events
            .windows(2)
            .find(|w| w[1].admit_day < w[0].discharge_day)
            .map(|w| ExclusionReason::OverlappingStays {
                admit_day: w[1].admit_day,
                previous_discharge_day: w[0].discharge_day,
            });
        if let Some(reason) = overlap {
            out.exclusions.push(exclude(reason));
            continue;
        }
        let Some(last) = events.iter().rposition(Claim::is_eligible_index) else {
            out.exclusions.push(exclude(ExclusionReason::NoEligibleIndex));
            continue;
        };
        let lookahead_admit = events.get(last + 1).map(|c| c.admit_day);
        events.truncate(last + 1);
        let tl = PatientTimeline {
            patient_id: String::from(pid),
            events,
            labels: Vec::new(),
            gap_labels: Vec::new(),
            lookahead_admit,
        };
        out.timelines.push(label_timeline(tl));
    }
    out
}

/// Apply the 30-day rule: event t is positive when the next admission
/// starts at most 30 days after its discharge. The final event looks ahead
/// to the first later raw claim; without one it is negative.
pub fn label_timeline(mut tl: PatientTimeline) -> PatientTimeline {
    let n = tl.events.len();
    let mut gap_labels = Vec::with_capacity(n);
    for t in 0..n {
        let next_admit = if t + 1 < n {
            Some(tl.events[t + 1].admit_day)
        } else {
            tl.lookahead_admit
        };
        let positive = next_admit.is_some_and(|a| a - tl.events[t].discharge_day <= READMIT_WINDOW_DAYS);
        gap_labels.push(positive);
    }
    tl.labels = tl
        .events
        .iter()
        .zip(&gap_labels)
        .map(|(e, &y)| e.primary_hf.then_some(y))
        .collect();
    tl.gap_labels = gap_labels;
    tl
}

pub fn index_mask(tl: &PatientTimeline) -> Vec<bool> {
    tl.events.iter().map(|e| e.primary_hf).collect()
}
