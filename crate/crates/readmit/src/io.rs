//! File formats: claims CSV, JSON documents, config overrides and the
//! report tables.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use readmit_core::claims::{Claim, Exclusion, N_COMORBIDITIES};
use readmit_core::importance::ImportanceTable;
use readmit_core::trainer::{EpochRecord, EvalReport, LengthBucket};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

const LIST_SEP: char = ';';

/// One claim as a flat CSV record. List fields are `;`-joined and the
/// comorbidity flags are a string of `0`/`1` characters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRow {
    pub patient_id: String,
    pub admit_day: i64,
    pub discharge_day: i64,
    pub primary_hf: bool,
    pub diagnoses: String,
    pub procedures: String,
    pub chronic: String,
    pub ecodes: String,
    pub procedure_classes: String,
    pub comorbidities: String,
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

fn join(v: &[String]) -> String {
    v.join(&LIST_SEP.to_string())
}

fn split(s: &str) -> Vec<String> {
    if s.is_empty() {
        Vec::new()
    } else {
        s.split(LIST_SEP).map(str::to_string).collect()
    }
}

impl From<&Claim> for ClaimRow {
    fn from(c: &Claim) -> Self {
        ClaimRow {
            patient_id: c.patient_id.clone(),
            admit_day: c.admit_day,
            discharge_day: c.discharge_day,
            primary_hf: c.primary_hf,
            diagnoses: join(&c.diagnoses),
            procedures: join(&c.procedures),
            chronic: join(&c.chronic),
            ecodes: join(&c.ecodes),
            procedure_classes: join(&c.procedure_classes),
            comorbidities: c.comorbidities.iter().map(|b| if *b { '1' } else { '0' }).collect(),
            mdc: c.mdc.clone(),
            risk_mortality: c.risk_mortality.clone(),
            severity: c.severity.clone(),
            or_proc: c.or_proc,
            n_chronic: c.n_chronic,
            age: c.age,
            female: c.female,
            income_quartile: c.income_quartile.clone(),
            location: c.location.clone(),
            resident: c.resident,
            los: c.los,
            aweekend: c.aweekend,
            discharge_month: c.discharge_month.clone(),
            disposition: c.disposition.clone(),
            pay_source: c.pay_source.clone(),
            sameday: c.sameday.clone(),
            elective: c.elective,
            rehab: c.rehab,
        }
    }
}

impl TryFrom<ClaimRow> for Claim {
    type Error = CliError;

    fn try_from(r: ClaimRow) -> CliResult<Claim> {
        let flags: Vec<bool> = r
            .comorbidities
            .chars()
            .map(|ch| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(CliError::Config(format!("patient {}: comorbidity flags must be 0 or 1", r.patient_id))),
            })
            .collect::<CliResult<_>>()?;
        let comorbidities: [bool; N_COMORBIDITIES] = flags.try_into().map_err(|v: Vec<bool>| {
            CliError::Config(format!(
                "patient {}: expected {N_COMORBIDITIES} comorbidity flags, got {}",
                r.patient_id,
                v.len()
            ))
        })?;
        Ok(Claim {
            diagnoses: split(&r.diagnoses),
            procedures: split(&r.procedures),
            chronic: split(&r.chronic),
            ecodes: split(&r.ecodes),
            procedure_classes: split(&r.procedure_classes),
            comorbidities,
            patient_id: r.patient_id,
            admit_day: r.admit_day,
            discharge_day: r.discharge_day,
            primary_hf: r.primary_hf,
            mdc: r.mdc,
            risk_mortality: r.risk_mortality,
            severity: r.severity,
            or_proc: r.or_proc,
            n_chronic: r.n_chronic,
            age: r.age,
            female: r.female,
            income_quartile: r.income_quartile,
            location: r.location,
            resident: r.resident,
            los: r.los,
            aweekend: r.aweekend,
            discharge_month: r.discharge_month,
            disposition: r.disposition,
            pay_source: r.pay_source,
            sameday: r.sameday,
            elective: r.elective,
            rehab: r.rehab,
        })
    }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::missing(path, e))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_claims(path: &Path, claims: &[Claim]) -> CliResult<()> {
    write_csv(path, claims.iter().map(ClaimRow::from))
}

pub fn read_claims(path: &Path) -> CliResult<Vec<Claim>> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(open(path)?));
    rdr.deserialize::<ClaimRow>()
        .map(|row| Claim::try_from(row?))
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(open(path)?));
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    Ok(serde_json::from_reader(BufReader::new(open(path)?))?)
}

/// Append one compact JSON document per line.
pub fn write_json_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut w = create(path)?;
    for it in items {
        serde_json::to_writer(&mut w, &it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Apply `path.to.field=value` overrides to a JSON document. The value is
/// parsed as JSON when possible and taken as a string otherwise. Every
/// field must already exist, so typos fail instead of being ignored.
pub fn apply_overrides(doc: &mut Value, sets: &[String]) -> CliResult<()> {
    for s in sets {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {s:?} is not of the form field=value")))?;
        let mut node = &mut *doc;
        for part in key.split('.') {
            node = node
                .get_mut(part)
                .ok_or_else(|| CliError::Config(format!("{key}: unknown field")))?;
        }
        *node = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    }
    Ok(())
}

/// Load a config: defaults, then an optional JSON file, then overrides.
pub fn resolve_config<T>(defaults: &T, file: Option<&Path>, sets: &[String]) -> CliResult<T>
where
    T: Serialize + DeserializeOwned,
{
    let mut doc = serde_json::to_value(defaults)?;
    if let Some(path) = file {
        let patch: Value = read_json(path)?;
        merge(&mut doc, patch);
    }
    apply_overrides(&mut doc, sets)?;
    serde_json::from_value(doc).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionRow {
    pub patient_id: String,
    pub reason: String,
}

impl From<&Exclusion> for ExclusionRow {
    fn from(e: &Exclusion) -> Self {
        let reason = serde_json::to_value(&e.reason)
            .ok()
            .and_then(|v| v.get("reason").and_then(Value::as_str).map(str::to_string))
            .unwrap_or_default();
        ExclusionRow {
            patient_id: e.patient_id.clone(),
            reason,
        }
    }
}

/// One row per test fold plus a pooled row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub fold: String,
    pub n: usize,
    pub n_positive: usize,
    pub auc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub best_epoch: Option<usize>,
    pub epochs_run: Option<usize>,
    pub lambda: Option<f64>,
}

pub fn report_rows(r: &EvalReport) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = r
        .folds
        .iter()
        .map(|f| ReportRow {
            model: r.model.clone(),
            fold: f.fold.to_string(),
            n: f.test.n,
            n_positive: f.test.n_positive,
            auc: f.test.auc,
            ci_low: f.test.ci_low,
            ci_high: f.test.ci_high,
            best_epoch: Some(f.best_epoch),
            epochs_run: Some(f.epochs_run),
            lambda: Some(f.lambda),
        })
        .collect();
    rows.push(ReportRow {
        model: r.model.clone(),
        fold: "pooled".into(),
        n: r.pooled.n,
        n_positive: r.pooled.n_positive,
        auc: r.pooled.auc,
        ci_low: r.pooled.ci_low,
        ci_high: r.pooled.ci_high,
        best_epoch: None,
        epochs_run: None,
        lambda: None,
    });
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub fold: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_auc: Option<f64>,
}

pub fn curve_rows(curves: &[Vec<EpochRecord>]) -> Vec<CurveRow> {
    curves
        .iter()
        .enumerate()
        .flat_map(|(fold, c)| {
            c.iter().map(move |e| CurveRow {
                fold,
                epoch: e.epoch,
                train_loss: e.train_loss,
                validation_auc: e.validation_auc,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub model: String,
    pub bucket: String,
    pub n: usize,
    pub n_positive: usize,
    pub auc: Option<f64>,
}

pub fn length_rows(model: &str, buckets: &[LengthBucket]) -> Vec<LengthRow> {
    buckets
        .iter()
        .map(|b| LengthRow {
            model: model.into(),
            bucket: b.bucket.clone(),
            n: b.n,
            n_positive: b.n_positive,
            auc: b.auc,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceCsvRow {
    pub feature: String,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub occurrence: f64,
    pub direction: String,
    pub rank: usize,
}

pub fn importance_rows(t: &ImportanceTable) -> Vec<ImportanceCsvRow> {
    let mut rows: Vec<ImportanceCsvRow> = t
        .rows
        .iter()
        .map(|r| ImportanceCsvRow {
            feature: r.feature.clone(),
            mean: r.mean,
            sd: r.sd,
            occurrence: r.occurrence,
            direction: serde_json::to_value(r.direction)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            rank: r.rank,
        })
        .collect();
    rows.sort_by_key(|r| r.rank);
    rows
}
