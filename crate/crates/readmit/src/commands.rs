//! The subcommands. Each writes its outputs plus one manifest and returns
//! that manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use readmit_core::claims::{build_timelines, PatientTimeline};
use readmit_core::featurizer::{to_examples, FeatureSpec, DEFAULT_COUNT_THRESHOLD};
use readmit_core::hyperopt::{Choice, SearchOptions, SearchSpace};
use readmit_core::importance::{
    absent_values, aggregate, lasso_importance, perturb_scores, topk_jaccard, AbsentMode, Direction, FoldCoefficients,
    ImportanceRow, ImportanceTable, Metric,
};
use readmit_core::model::{default_config, display_name, ModelConfig, SequenceModel, CATALOG};
use readmit_core::synthgen::{generate, summarize, CohortConfig, CohortSummary};
use readmit_core::trainer::{CvOptions, EvalReport, FoldPlan};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, fold_dir, Checkpoint};
use crate::cli::{AbsentArg, Command, HyperoptArgs, ImportanceArgs, ReportArgs, SynthArgs, TrainArgs};
use crate::error::{CliError, CliResult};
use crate::io::{
    curve_rows, importance_rows, length_rows, read_claims, read_csv, read_json, report_rows, resolve_config, write_claims,
    write_csv, write_json, write_json_lines, ExclusionRow, ImportanceCsvRow, LengthRow,
};
use crate::manifest::{manifest_path, ManifestBuilder, RunManifest};
use crate::runner;

pub fn run(data_dir: &Path, command: &Command) -> CliResult<Vec<RunManifest>> {
    match command {
        Command::Synth(a) => synth(data_dir, a).map(|m| vec![m]),
        Command::Train(a) => train(data_dir, a),
        Command::Importance(a) => importance(data_dir, a).map(|m| vec![m]),
        Command::Hyperopt(a) => hyperopt(data_dir, a).map(|m| vec![m]),
        Command::Report(a) => report(data_dir, a).map(|m| vec![m]),
    }
}

fn claims_path(data_dir: &Path, data: Option<&PathBuf>) -> PathBuf {
    data.cloned().unwrap_or_else(|| data_dir.join("claims.csv"))
}

/// Read claims and build labeled timelines, failing when none survive.
pub fn load_timelines(path: &Path) -> CliResult<(Vec<PatientTimeline>, Vec<ExclusionRow>)> {
    let built = build_timelines(&read_claims(path)?);
    if built.timelines.is_empty() {
        return Err(CliError::Config(format!("{}: no patient passes inclusion", path.display())));
    }
    Ok((built.timelines, built.exclusions.iter().map(ExclusionRow::from).collect()))
}

pub fn synth(data_dir: &Path, a: &SynthArgs) -> CliResult<RunManifest> {
    let mut m = ManifestBuilder::new("synth");
    let mut cfg: CohortConfig = resolve_config(&CohortConfig::default(), a.config.as_deref(), &a.overrides)?;
    if let Some(n) = a.patients {
        cfg.n_patients = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let claims = generate(&cfg)?;
    let summary = summarize(&claims)?;
    let out = a.out.clone().unwrap_or_else(|| data_dir.to_path_buf());
    let (claims_csv, summary_json) = (out.join("claims.csv"), out.join("summary.json"));
    write_claims(&claims_csv, &claims)?;
    write_json(&summary_json, &summary)?;
    m.config_path(a.config.as_deref())
        .seed(cfg.seed)
        .output(&claims_csv)
        .output(&summary_json)
        .config(&cfg)?;
    m.finish(&out)
}

/// Feature count of a spec fitted on the whole cohort. Only used to size
/// the dimension-relative defaults of a model; each fold refits its own.
fn sizing_dim(timelines: &[PatientTimeline]) -> CliResult<usize> {
    Ok(FeatureSpec::fit(timelines, DEFAULT_COUNT_THRESHOLD)?.d)
}

fn resolve_model(name: &str, d: usize, file: Option<&Path>, sets: &[String]) -> CliResult<ModelConfig> {
    let defaults = default_config(name, d)?;
    let cfg: ModelConfig = resolve_config(&defaults, file, sets)?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub fold: usize,
    pub feature: String,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub model: String,
    pub label: String,
    pub auc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_fold_auc: f64,
    pub n: usize,
}

impl Table2Row {
    fn of(r: &EvalReport) -> Self {
        Table2Row {
            label: display_name(&r.model).unwrap_or_else(|| r.model.clone()),
            model: r.model.clone(),
            auc: r.pooled.auc,
            ci_low: r.pooled.ci_low,
            ci_high: r.pooled.ci_high,
            mean_fold_auc: r.mean_fold_auc,
            n: r.pooled.n,
        }
    }
}

pub fn train(data_dir: &Path, a: &TrainArgs) -> CliResult<Vec<RunManifest>> {
    let names: Vec<&str> = if a.model == "all" {
        if a.config.is_some() {
            return Err(CliError::Config("config: a config file applies to a single model, not `all`".into()));
        }
        CATALOG.to_vec()
    } else {
        default_config(&a.model, 1)?;
        vec![a.model.as_str()]
    };
    let data = claims_path(data_dir, a.data.as_ref());
    let (timelines, exclusions) = load_timelines(&data)?;
    let d = sizing_dim(&timelines)?;
    let out = a.out.clone().unwrap_or_else(|| data_dir.join("runs"));
    let opts = CvOptions {
        k: a.folds,
        seed: a.seed,
        level: a.level,
        tune_logistic: !a.equalize_lr,
        ..Default::default()
    };
    let mut manifests = Vec::new();
    let mut table = Vec::new();
    for name in names {
        let cfg = resolve_model(name, d, a.config.as_deref(), &a.overrides)?;
        let dir = out.join(name);
        let mut m = ManifestBuilder::new("train");
        m.config_path(a.config.as_deref()).seed(a.seed).input(&data).config(&cfg)?;
        let (report, plan, runs) = runner::cross_validate(&cfg, &timelines, &opts, a.workers)?;
        for run in &runs {
            checkpoint::save(&fold_dir(&dir, run.fold), &cfg, run)?;
            m.output(&fold_dir(&dir, run.fold));
        }
        let mut files = vec![
            ("report.json", write_json(&dir.join("report.json"), &report)),
            ("report.csv", write_csv(&dir.join("report.csv"), report_rows(&report))),
            ("curves.csv", write_csv(&dir.join("curves.csv"), curve_rows(&report.curves))),
            ("by_length.csv", write_csv(&dir.join("by_length.csv"), length_rows(name, &report.by_length))),
            ("predictions.csv", write_csv(&dir.join("predictions.csv"), &report.predictions)),
            ("plan.json", write_json(&dir.join("plan.json"), &plan)),
            ("exclusions.csv", write_csv(&dir.join("exclusions.csv"), &exclusions)),
        ];
        if cfg.is_logistic() {
            let rows: Vec<CoefficientRow> = runs
                .iter()
                .flat_map(|r| {
                    let lr = r.outcome.model.as_logistic().expect("logistic run");
                    r.spec
                        .feature_names()
                        .into_iter()
                        .zip(lr.weights().to_vec())
                        .map(|(feature, coefficient)| CoefficientRow {
                            fold: r.fold,
                            feature,
                            coefficient,
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            files.push(("coefficients.csv", write_csv(&dir.join("coefficients.csv"), rows)));
        }
        for (f, res) in files {
            res?;
            m.output(&dir.join(f));
        }
        table.push(Table2Row::of(&report));
        manifests.push(m.finish(&dir)?);
    }
    if a.model == "all" {
        write_csv(&out.join("table2.csv"), &table)?;
    }
    Ok(manifests)
}

fn absent_mode(a: AbsentArg) -> AbsentMode {
    match a {
        AbsentArg::StandardizedMean => AbsentMode::StandardizedMean,
        AbsentArg::RawZero => AbsentMode::RawZero,
    }
}

fn table_from_csv(path: &Path, metric: Metric) -> CliResult<ImportanceTable> {
    let rows: Vec<ImportanceCsvRow> = read_csv(path)?;
    let rows = rows
        .into_iter()
        .map(|r| {
            let direction: Direction = serde_json::from_value(serde_json::Value::String(r.direction.clone()))
                .map_err(|_| CliError::Config(format!("{}: unknown direction {:?}", path.display(), r.direction)))?;
            Ok(ImportanceRow {
                feature: r.feature,
                mean: r.mean,
                sd: r.sd,
                occurrence: r.occurrence,
                direction,
                rank: r.rank,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(ImportanceTable {
        metric,
        folds: 0,
        rows,
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardRow {
    pub direction: Direction,
    pub k: usize,
    pub jaccard: f64,
    pub warning: Option<String>,
}

pub fn importance(data_dir: &Path, a: &ImportanceArgs) -> CliResult<RunManifest> {
    let metric = Metric::parse(&a.metric)?;
    let run = a.run.clone().unwrap_or_else(|| data_dir.join("runs").join("rnncrf-pairwise"));
    let plan_path = run.join("plan.json");
    if !plan_path.is_file() {
        return Err(CliError::missing(&plan_path, "not a trained run directory"));
    }
    let plan: FoldPlan = read_json(&plan_path)?;
    let ckpts = checkpoint::load_all(&run, plan.k)?;
    let mut m = ManifestBuilder::new("importance");
    m.input(&run);
    let mut table = if metric == Metric::LassoCoefficient {
        let folds = ckpts
            .iter()
            .map(|c| {
                let lr = c.model.as_logistic().ok_or_else(|| {
                    CliError::Config(format!("metric: {} ranks logistic models only, not {}", metric.slug(), c.config.name))
                })?;
                Ok(FoldCoefficients {
                    names: c.spec.feature_names(),
                    weights: lr.weights().to_vec(),
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        lasso_importance(&folds)?
    } else {
        let data = match &a.data {
            Some(p) => p.clone(),
            None => {
                let mp = manifest_path(&run, "train");
                let trained: RunManifest = read_json(&mp)?;
                trained
                    .inputs
                    .first()
                    .cloned()
                    .ok_or_else(|| CliError::missing(&mp, "no input recorded"))?
            }
        };
        m.input(&data);
        let (timelines, _) = load_timelines(&data)?;
        let by_id: std::collections::HashMap<&str, &PatientTimeline> =
            timelines.iter().map(|t| (t.patient_id.as_str(), t)).collect();
        let mode = absent_mode(a.absent);
        let per_fold = runner::pool(a.workers)?.install(|| {
            ckpts
                .par_iter()
                .enumerate()
                .map(|(f, c)| fold_importance(c, &plan, f, &by_id, mode, metric))
                .collect::<CliResult<Vec<_>>>()
        })?;
        aggregate(metric, &per_fold)
    };
    table.folds = ckpts.len();
    let out = a.out.clone().unwrap_or_else(|| run.clone());
    let csv_path = out.join(format!("importance_{}.csv", metric.slug()));
    write_csv(&csv_path, importance_rows(&table))?;
    m.output(&csv_path);
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(other) = &a.compare {
        let other_metric = other
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.strip_prefix("importance_"))
            .and_then(|s| Metric::parse(s).ok())
            .unwrap_or(metric);
        let theirs = table_from_csv(other, other_metric)?;
        m.input(other);
        let rows: Vec<JaccardRow> = [Direction::Increase, Direction::Decrease]
            .into_iter()
            .map(|direction| {
                let (jaccard, warning) = topk_jaccard(&table, &theirs, a.top_k, direction);
                JaccardRow {
                    direction,
                    k: a.top_k,
                    jaccard,
                    warning,
                }
            })
            .collect();
        let jp = out.join("jaccard.json");
        write_json(&jp, &rows)?;
        m.output(&jp);
    }
    m.config(&serde_json::json!({
        "metric": metric,
        "absent": absent_mode(a.absent),
        "top_k": a.top_k,
    }))?;
    m.finish(&out)
}

fn fold_importance(
    c: &Checkpoint,
    plan: &FoldPlan,
    fold: usize,
    by_id: &std::collections::HashMap<&str, &PatientTimeline>,
    mode: AbsentMode,
    metric: Metric,
) -> CliResult<Vec<readmit_core::importance::FeatureScore>> {
    let test: Vec<PatientTimeline> = plan.folds[fold]
        .test
        .iter()
        .map(|&i| {
            let id = &plan.ids[i];
            by_id
                .get(id.as_str())
                .map(|t| (*t).clone())
                .ok_or_else(|| CliError::Config(format!("patient {id} of the run is not in the data")))
        })
        .collect::<CliResult<_>>()?;
    let exs = to_examples(&c.spec, &test);
    let names = c.spec.feature_names();
    let absent = absent_values(&c.spec, mode);
    Ok(perturb_scores(|ex| c.model.predict(ex), &exs, &names, &absent, metric)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub model: String,
    pub n_trials: usize,
    pub n_failed: usize,
    pub best_trial: Option<usize>,
    pub best_validation_auc: Option<f64>,
    pub best_so_far: Vec<Option<f64>>,
}

pub fn hyperopt(data_dir: &Path, a: &HyperoptArgs) -> CliResult<RunManifest> {
    let mut space = SearchSpace::for_model(&a.model)?;
    for r in &a.restrict {
        let (dim, raw) = r
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("restrict {r:?} is not of the form dim=[...]")))?;
        let choices: Vec<Choice> =
            serde_json::from_str(raw).map_err(|e| CliError::Config(format!("restrict {dim}: {e}")))?;
        space.restrict(dim, choices)?;
    }
    let opts = SearchOptions {
        n_trials: a.trials,
        seed: a.seed,
        max_epochs: a.max_epochs,
        patience: a.patience,
        subset_fraction: a.subset_fraction,
        ..Default::default()
    };
    let data = claims_path(data_dir, a.data.as_ref());
    let (timelines, _) = load_timelines(&data)?;
    let search_data = readmit_core::hyperopt::prepare_search(&timelines, &opts)?;
    let lines = runner::search(&space, &search_data, &opts, a.workers)?;
    let dir = a.out.clone().unwrap_or_else(|| data_dir.join("hyperopt")).join(&a.model);
    let mut m = ManifestBuilder::new("hyperopt");
    m.seed(a.seed).input(&data).config(&serde_json::json!({"space": space, "options": opts}))?;
    let trials_path = dir.join("trials.jsonl");
    write_json_lines(&trials_path, &lines)?;
    m.output(&trials_path);
    let records: Vec<_> = lines.iter().map(|l| l.record.clone()).collect();
    let best = lines.iter().find(|l| l.rank == 1 && l.record.validation_auc.is_some());
    let summary = SearchSummary {
        model: a.model.clone(),
        n_trials: lines.len(),
        n_failed: lines.iter().filter(|l| l.record.error.is_some()).count(),
        best_trial: best.map(|b| b.record.trial),
        best_validation_auc: best.and_then(|b| b.record.validation_auc),
        best_so_far: readmit_core::hyperopt::best_so_far(&records),
    };
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    m.output(&summary_path);
    match best.and_then(|b| b.record.config.as_ref()) {
        Some(cfg) => {
            let p = dir.join("best_config.json");
            write_json(&p, cfg)?;
            m.output(&p);
        }
        None => {
            m.finish(&dir)?;
            return Err(CliError::Numerical(format!("none of the {} trials finished", lines.len())));
        }
    }
    m.finish(&dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub characteristic: String,
    pub synthetic: f64,
    pub reference: Option<f64>,
}

pub fn table1_rows(s: &CohortSummary) -> Vec<Table1Row> {
    let r = &s.reference;
    let row = |name: &str, synthetic: f64, reference: Option<f64>| Table1Row {
        characteristic: name.into(),
        synthetic,
        reference,
    };
    let mut rows = vec![
        row("patients", s.n_patients as f64, Some(r.n_patients as f64)),
        row("age_mean", s.age_mean, Some(r.age_mean)),
        row("age_sd", s.age_sd, Some(r.age_sd)),
        row("female_share", s.frac_female, Some(r.frac_female)),
        row("hf_event_share", s.hf_event_share, Some(r.hf_event_share)),
        row("readmission_rate", s.readmission_rate, Some(r.readmission_rate)),
        row("timeline_len_mean", s.timeline_len_mean, Some(r.timeline_len_mean)),
        row("timeline_len_sd", s.timeline_len_sd, Some(r.timeline_len_sd)),
    ];
    let named = |kind: &str, c: &readmit_core::synthgen::CategoryCount| {
        let label = c.label.as_deref().map(|l| format!(" {l}")).unwrap_or_default();
        row(&format!("{kind}:{}{label}", c.code), c.share, None)
    };
    rows.extend(s.pay_source.iter().map(|c| named("pay_source", c)));
    rows.extend(s.top_diagnoses.iter().map(|c| named("diagnosis", c)));
    rows.extend(s.top_procedures.iter().map(|c| named("procedure", c)));
    rows
}

/// Reports of every trained model under `runs`, in catalog order, then any
/// other run names alphabetically.
pub fn collect_reports(runs: &Path) -> CliResult<Vec<EvalReport>> {
    let entries = fs::read_dir(runs).map_err(|e| CliError::missing(runs, e))?;
    let mut found: Vec<(usize, String, PathBuf)> = Vec::new();
    for e in entries {
        let p = e?.path().join("report.json");
        if p.is_file() {
            let name = p.parent().and_then(|d| d.file_name()).and_then(|n| n.to_str()).unwrap_or("").to_string();
            let order = CATALOG.iter().position(|c| *c == name).unwrap_or(CATALOG.len());
            found.push((order, name, p));
        }
    }
    if found.is_empty() {
        return Err(CliError::missing(runs, "no trained runs found"));
    }
    found.sort();
    found.iter().map(|(_, _, p)| read_json(p)).collect()
}

pub fn report(data_dir: &Path, a: &ReportArgs) -> CliResult<RunManifest> {
    let all = !(a.table1 || a.table2 || a.by_length);
    let runs = a.runs.clone().unwrap_or_else(|| data_dir.join("runs"));
    let data = claims_path(data_dir, a.data.as_ref());
    let out = a.out.clone().unwrap_or_else(|| runs.clone());
    let mut m = ManifestBuilder::new("report");
    if a.table1 || (all && data.is_file()) {
        let summary = summarize(&read_claims(&data)?)?;
        let p = out.join("table1.csv");
        write_csv(&p, table1_rows(&summary))?;
        m.input(&data).output(&p);
    }
    if a.table2 || a.by_length || (all && runs.is_dir()) {
        let reports = collect_reports(&runs)?;
        m.input(&runs);
        if a.table2 || all {
            let p = out.join("table2.csv");
            write_csv(&p, reports.iter().map(Table2Row::of))?;
            m.output(&p);
        }
        if a.by_length || all {
            let rows: Vec<LengthRow> = reports.iter().flat_map(|r| length_rows(&r.model, &r.by_length)).collect();
            let p = out.join("by_length.csv");
            write_csv(&p, rows)?;
            m.output(&p);
        }
    }
    m.config(&serde_json::json!({"table1": a.table1, "table2": a.table2, "by_length": a.by_length}))?;
    fs::create_dir_all(&out)?;
    m.finish(&out)
}
