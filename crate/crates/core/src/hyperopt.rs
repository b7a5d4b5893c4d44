//! Uniform random search over per-family hyperparameter grids.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::claims::PatientTimeline;
use crate::crf::{CrfConfig, Encoder};
use crate::error::{Error, Result};
use crate::featurizer::{to_examples, Example, FeatureSpec, DEFAULT_COUNT_THRESHOLD};
use crate::feedforward::Pool;
use crate::layers::CellKind;
use crate::model::{default_config, Architecture, ModelConfig, CATALOG};
use crate::numerics::Activation;
use crate::recurrent::{RecurrentConfig, SamplingSchedule, ScheduleKind, StackConfig};
use crate::rng::{child_rng, derive_seed};
use crate::trainer::{make_folds, stratified_holdout, stratified_subset, train_model};

/// One candidate value of a hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Choice {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Choice {
    fn text(s: &str) -> Choice {
        Choice::Text(s.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub choices: Vec<Choice>,
}

/// Drawn value per dimension name.
pub type Assignment = BTreeMap<String, Choice>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Catalog model whose default configuration the draws modify.
    pub model: String,
    pub dims: Vec<Dimension>,
}

fn ints(v: &[i64]) -> Vec<Choice> {
    v.iter().map(|x| Choice::Int(*x)).collect()
}

fn floats(v: &[f64]) -> Vec<Choice> {
    v.iter().map(|x| Choice::Float(*x)).collect()
}

fn texts(v: &[&str]) -> Vec<Choice> {
    v.iter().map(|x| Choice::text(x)).collect()
}

const BOOLS: [Choice; 2] = [Choice::Bool(true), Choice::Bool(false)];
const LAMBDAS: [f64; 3] = [1e-3, 1e-2, 1e-1];
const DROPOUTS: [f64; 3] = [0.15, 0.35, 0.5];
const BATCHES: [i64; 5] = [8, 16, 32, 64, 128];

/// Family aliases accepted besides catalog names.
fn resolve_alias(name: &str) -> &str {
    match name {
        "rnn" => "rnn-convex-hf-lasthf",
        "rnnss" => "rnnss-convex-hf-lasthf",
        "rnncrf" => "rnncrf-pairwise",
        "crf" => "crf-pairwise",
        "neural-crf" => "neural-crf-pairwise",
        "lr" => "lr-l1",
        other => other,
    }
}

impl SearchSpace {
    /// The grid of a catalog model (or family alias such as `rnn`).
    pub fn for_model(name: &str) -> Result<SearchSpace> {
        let model = resolve_alias(name);
        if !CATALOG.contains(&model) {
            return Err(Error::config("model", format!("unknown model '{name}'")));
        }
        let mut dims: Vec<(&str, Vec<Choice>)> = Vec::new();
        let recurrent_core = |dims: &mut Vec<(&str, Vec<Choice>)>| {
            dims.push(("input_embed_div", ints(&[0, 2, 3, 4])));
            dims.push(("cell", texts(&["lstm", "gru", "vanilla"])));
            dims.push(("hidden", ints(&[8, 16, 32, 64, 128, 256])));
            dims.push(("layers", ints(&[1, 2, 3])));
            dims.push(("dropout", floats(&DROPOUTS)));
            dims.push(("output_embed_div", ints(&[0, 1, 2, 3, 4])));
            dims.push(("activation", texts(&["tanh", "relu"])));
            dims.push(("lambda", floats(&LAMBDAS)));
        };
        if model.starts_with("rnn-") || model.starts_with("rnnss-") {
            recurrent_core(&mut dims);
            dims.push(("alpha", floats(&[0.65, 0.8, 0.95])));
            dims.push(("batch_size", ints(&BATCHES)));
            if model.starts_with("rnnss-") {
                dims.push(("schedule", texts(&["linear", "exponential", "sigmoid"])));
            }
        } else if model.starts_with("rnncrf-") {
            recurrent_core(&mut dims);
            dims.push(("batch_size", ints(&BATCHES)));
        } else if model.starts_with("neural-crf-") {
            dims.push(("input_embed_div", ints(&[0, 2, 3, 4])));
            dims.push(("dropout", floats(&DROPOUTS)));
            dims.push(("output_embed_div", ints(&[0, 2, 3, 4])));
            dims.push(("activation", texts(&["tanh", "relu"])));
            dims.push(("lambda", floats(&LAMBDAS)));
            dims.push(("batch_size", ints(&BATCHES)));
        } else if model.starts_with("crf-") {
            dims.push(("lambda", floats(&LAMBDAS)));
            dims.push(("batch_size", ints(&BATCHES)));
        } else if model == "cnn" {
            dims.push(("kernel", ints(&[3, 5])));
            dims.push(("batch_norm", BOOLS.to_vec()));
            dims.push(("activation", texts(&["tanh", "relu"])));
            dims.push(("dropout", floats(&[0.0, 0.15])));
            dims.push(("start_channels", ints(&[64, 128, 256])));
            dims.push(("convs_per_block", ints(&[1, 2, 3])));
            dims.push(("pool", texts(&["avg", "max"])));
            dims.push(("repeats", ints(&[7, 8])));
            dims.push(("fc_divisor", ints(&[3, 4, 5])));
            dims.push(("fc_batch_norm", BOOLS.to_vec()));
            dims.push(("fc_activation", texts(&["tanh", "relu"])));
            dims.push(("fc_dropout", floats(&[0.0, 0.15, 0.35, 0.5])));
            dims.push(("fc_blocks", ints(&[1, 2])));
            dims.push(("lambda", floats(&LAMBDAS)));
            dims.push(("batch_size", ints(&[8, 16, 32])));
        } else if model == "cnn-wide" {
            dims.push(("kernel_types", ints(&[2, 3])));
            dims.push(("batch_norm", BOOLS.to_vec()));
            dims.push(("activation", texts(&["tanh", "relu"])));
            dims.push(("dropout", floats(&[0.0, 0.15])));
            dims.push(("kernels", ints(&[16, 32, 64, 128])));
            dims.push(("padding", BOOLS.to_vec()));
            dims.push(("pool", texts(&["avg", "max"])));
            dims.push(("fc_divisor", ints(&[1, 2, 3, 4])));
            dims.push(("fc_batch_norm", BOOLS.to_vec()));
            dims.push(("fc_activation", texts(&["tanh", "relu"])));
            dims.push(("fc_dropout", floats(&[0.0, 0.15, 0.35, 0.5])));
            dims.push(("fc_blocks", ints(&[1, 2])));
            dims.push(("lambda", floats(&LAMBDAS)));
            dims.push(("batch_size", ints(&[8, 16, 32])));
        } else if model == "mlp" {
            dims.push(("fc_divisor", ints(&[2, 3, 4])));
            dims.push(("fc_batch_norm", BOOLS.to_vec()));
            dims.push(("fc_activation", texts(&["tanh", "relu"])));
            dims.push(("fc_dropout", floats(&[0.0, 0.15, 0.35, 0.5])));
            dims.push(("fc_blocks", ints(&[1, 2, 3, 4, 5])));
            dims.push(("lambda", floats(&LAMBDAS)));
            dims.push(("batch_size", ints(&[32, 64, 128])));
        } else if model == "lr-l1" {
            dims.push(("lambda", floats(&LAMBDAS)));
            dims.push(("weighting", texts(&["balanced", "none"])));
        } else {
            dims.push(("lambda", floats(&[1e-3, 1e-2, 1e-1, 1.0])));
            dims.push(("weighting", texts(&["balanced", "none"])));
        }
        Ok(SearchSpace {
            model: model.into(),
            dims: dims
                .into_iter()
                .map(|(name, choices)| Dimension {
                    name: name.into(),
                    choices,
                })
                .collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !CATALOG.contains(&self.model.as_str()) {
            return Err(Error::config("model", format!("unknown model '{}'", self.model)));
        }
        for d in &self.dims {
            if d.choices.is_empty() {
                return Err(Error::config(&d.name, "candidate set is empty"));
            }
        }
        Ok(())
    }

    /// Replace the candidates of one dimension.
    pub fn restrict(&mut self, name: &str, choices: Vec<Choice>) -> Result<()> {
        let d = self
            .dims
            .iter_mut()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::config(name, "no such dimension"))?;
        d.choices = choices;
        Ok(())
    }
}

/// Draw each dimension independently and uniformly.
pub fn sample_assignment(space: &SearchSpace, rng: &mut crate::rng::Rng) -> Assignment {
    space
        .dims
        .iter()
        .map(|d| (d.name.clone(), d.choices[rng.random_range(0..d.choices.len())].clone()))
        .collect()
}

struct Reader<'a> {
    a: &'a Assignment,
}

impl Reader<'_> {
    fn get(&self, name: &str) -> Option<&Choice> {
        self.a.get(name)
    }

    fn int(&self, name: &str) -> Result<Option<usize>> {
        match self.get(name) {
            None => Ok(None),
            Some(Choice::Int(v)) if *v >= 0 => Ok(Some(*v as usize)),
            Some(other) => Err(Error::config(name, format!("expected a non-negative integer, got {other:?}"))),
        }
    }

    fn float(&self, name: &str) -> Result<Option<f64>> {
        match self.get(name) {
            None => Ok(None),
            Some(Choice::Float(v)) => Ok(Some(*v)),
            Some(Choice::Int(v)) => Ok(Some(*v as f64)),
            Some(other) => Err(Error::config(name, format!("expected a number, got {other:?}"))),
        }
    }

    fn flag(&self, name: &str) -> Result<Option<bool>> {
        match self.get(name) {
            None => Ok(None),
            Some(Choice::Bool(v)) => Ok(Some(*v)),
            Some(other) => Err(Error::config(name, format!("expected a boolean, got {other:?}"))),
        }
    }

    fn text(&self, name: &str) -> Result<Option<&str>> {
        match self.get(name) {
            None => Ok(None),
            Some(Choice::Text(v)) => Ok(Some(v.as_str())),
            Some(other) => Err(Error::config(name, format!("expected text, got {other:?}"))),
        }
    }

    fn activation(&self, name: &str) -> Result<Option<Activation>> {
        self.text(name)?
            .map(|t| match t {
                "tanh" => Ok(Activation::Tanh),
                "relu" => Ok(Activation::Relu),
                other => Err(Error::config(name, format!("unknown activation '{other}'"))),
            })
            .transpose()
    }

    fn pool(&self, name: &str) -> Result<Option<Pool>> {
        self.text(name)?
            .map(|t| match t {
                "avg" => Ok(Pool::Avg),
                "max" => Ok(Pool::Max),
                other => Err(Error::config(name, format!("unknown pooling '{other}'"))),
            })
            .transpose()
    }
}

/// `⌊base / div⌋` (at least 1), or 0 when `div` is 0.
fn divided(base: usize, div: usize) -> usize {
    base.checked_div(div).map_or(0, |v| v.max(1))
}

fn apply_stack(r: &Reader, s: &mut StackConfig, input_dim: usize) -> Result<()> {
    if let Some(c) = r.text("cell")? {
        s.cell = match c {
            "lstm" => CellKind::Lstm,
            "gru" => CellKind::Gru,
            "vanilla" => CellKind::Vanilla,
            other => return Err(Error::config("cell", format!("unknown cell '{other}'"))),
        };
    }
    if let Some(v) = r.int("hidden")? {
        s.hidden = v;
    }
    if let Some(v) = r.int("layers")? {
        s.layers = v;
    }
    if let Some(v) = r.float("dropout")? {
        s.dropout = v;
    }
    if let Some(a) = r.activation("activation")? {
        s.activation = a;
    }
    if let Some(div) = r.int("input_embed_div")? {
        s.input_embed = divided(input_dim, div);
    }
    if let Some(div) = r.int("output_embed_div")? {
        // sized from the layer below: the recurrent state, or the input
        // embedding (or raw input) when there is no recurrence
        let below = if s.layers > 0 {
            s.hidden
        } else if s.input_embed > 0 {
            s.input_embed
        } else {
            input_dim
        };
        s.output_embed = divided(below, div);
    }
    Ok(())
}

fn apply_fc(r: &Reader, fc: &mut crate::feedforward::FcConfig) -> Result<()> {
    if let Some(v) = r.int("fc_divisor")? {
        fc.divisor = v;
    }
    if let Some(v) = r.flag("fc_batch_norm")? {
        fc.batch_norm = v;
    }
    if let Some(a) = r.activation("fc_activation")? {
        fc.activation = a;
    }
    if let Some(v) = r.float("fc_dropout")? {
        fc.dropout = v;
    }
    if let Some(v) = r.int("fc_blocks")? {
        fc.blocks = v;
    }
    Ok(())
}

/// Turn an assignment into a configuration of the space's model. Dimensions
/// absent from the assignment keep the model's defaults; dependent sizes
/// (embedding divisors) are resolved after the sizes they divide.
pub fn realize(space: &SearchSpace, assignment: &Assignment, input_dim: usize) -> Result<ModelConfig> {
    let mut cfg = default_config(&space.model, input_dim)?;
    let r = Reader { a: assignment };
    if let Some(v) = r.float("lambda")? {
        cfg.training.lambda = v;
    }
    if let Some(v) = r.int("batch_size")? {
        cfg.training.batch_size = v;
    }
    match &mut cfg.architecture {
        Architecture::Recurrent(RecurrentConfig {
            stack, alpha, schedule, ..
        }) => {
            apply_stack(&r, stack, input_dim)?;
            if let Some(v) = r.float("alpha")? {
                *alpha = v;
            }
            if let Some(s) = r.text("schedule")? {
                let kind = match s {
                    "linear" => ScheduleKind::Linear,
                    "exponential" => ScheduleKind::Exponential,
                    "sigmoid" => ScheduleKind::Sigmoid,
                    other => return Err(Error::config("schedule", format!("unknown schedule '{other}'"))),
                };
                *schedule = SamplingSchedule {
                    kind,
                    rho: if kind == ScheduleKind::Sigmoid { 10.0 } else { 0.9 },
                    ..SamplingSchedule::default()
                };
            }
        }
        Architecture::Crf(CrfConfig { encoder, stack, .. }) => {
            if *encoder != Encoder::Linear {
                apply_stack(&r, stack, input_dim)?;
            }
        }
        Architecture::Mlp(fc) => apply_fc(&r, fc)?,
        Architecture::Cnn(c) => {
            if let Some(v) = r.int("kernel")? {
                c.kernel = v;
            }
            if let Some(v) = r.flag("batch_norm")? {
                c.batch_norm = v;
            }
            if let Some(a) = r.activation("activation")? {
                c.activation = a;
            }
            if let Some(v) = r.float("dropout")? {
                c.dropout = v;
            }
            if let Some(v) = r.int("start_channels")? {
                c.start_channels = v;
                c.max_channels = 2 * v;
            }
            if let Some(v) = r.int("convs_per_block")? {
                c.convs_per_block = v;
            }
            if let Some(p) = r.pool("pool")? {
                c.pool = p;
            }
            if let Some(v) = r.int("repeats")? {
                c.repeats = v;
            }
            apply_fc(&r, &mut c.fc)?;
        }
        Architecture::CnnWide(c) => {
            if let Some(v) = r.int("kernel_types")? {
                let all = [2usize, 3, 5];
                c.widths = all[..v.clamp(1, all.len())].to_vec();
            }
            if let Some(v) = r.flag("batch_norm")? {
                c.batch_norm = v;
            }
            if let Some(a) = r.activation("activation")? {
                c.activation = a;
            }
            if let Some(v) = r.float("dropout")? {
                c.dropout = v;
            }
            if let Some(v) = r.int("kernels")? {
                c.kernels = v;
            }
            if let Some(v) = r.flag("padding")? {
                c.padding = v;
            }
            if let Some(p) = r.pool("pool")? {
                c.pool = p;
            }
            apply_fc(&r, &mut c.fc)?;
        }
        Architecture::Logistic(lc) => {
            if let Some(w) = r.text("weighting")? {
                lc.balanced = match w {
                    "balanced" => true,
                    "none" => false,
                    other => return Err(Error::config("weighting", format!("unknown weighting '{other}'"))),
                };
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn sample_config(space: &SearchSpace, input_dim: usize, rng: &mut crate::rng::Rng) -> Result<(Assignment, ModelConfig)> {
    let a = sample_assignment(space, rng);
    let cfg = realize(space, &a, input_dim)?;
    Ok((a, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    pub n_trials: usize,
    pub seed: u64,
    /// Cross-validation fold whose training patients are searched over.
    pub fold: usize,
    pub k: usize,
    /// Share of the fold's training patients used by the search.
    pub subset_fraction: f64,
    /// Share of the subset held out for scoring trials.
    pub validation_fraction: f64,
    pub count_threshold: usize,
    /// Per-trial epoch budget; early stopping still applies.
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            n_trials: 50,
            seed: 0,
            fold: 0,
            k: 5,
            subset_fraction: 0.3,
            validation_fraction: 0.1,
            count_threshold: DEFAULT_COUNT_THRESHOLD,
            max_epochs: 30,
            patience: 10,
        }
    }
}

/// The featurized search subset shared by every trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchData {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub max_len: usize,
    pub input_dim: usize,
}

/// Carve the search subset out of one fold's training patients and
/// featurize it.
pub fn prepare_search(timelines: &[PatientTimeline], opts: &SearchOptions) -> Result<SearchData> {
    let plan = make_folds(timelines, opts.k, 0.1, opts.seed)?;
    let fold = plan
        .folds
        .get(opts.fold)
        .ok_or_else(|| Error::config("fold", format!("{} is out of range", opts.fold)))?;
    let subset = stratified_subset(&fold.train_all(), &plan.labels, opts.subset_fraction, derive_seed(opts.seed, 7))?;
    let (train_idx, val_idx) = stratified_holdout(&subset, &plan.labels, opts.validation_fraction, derive_seed(opts.seed, 8))?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| timelines[i].clone()).collect::<Vec<_>>();
    let spec = FeatureSpec::fit(&pick(&subset), opts.count_threshold)?;
    let train = to_examples(&spec, &pick(&train_idx));
    let validation = to_examples(&spec, &pick(&val_idx));
    let max_len = train.iter().map(|e| e.len()).max().unwrap_or(1);
    let input_dim = train.first().map_or(0, |e| e.dim());
    Ok(SearchData {
        train,
        validation,
        max_len,
        input_dim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub assignment: Assignment,
    pub config: Option<ModelConfig>,
    pub epochs: usize,
    pub validation_auc: Option<f64>,
    pub error: Option<String>,
}

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, trial as u64)
}

/// Train one configuration on the search subset. Failures are recorded in
/// the returned record rather than propagated.
pub fn evaluate_config(trial: usize, seed: u64, assignment: Assignment, config: Result<ModelConfig>, data: &SearchData, opts: &SearchOptions) -> TrialRecord {
    let mut record = TrialRecord {
        trial,
        seed,
        assignment,
        config: None,
        epochs: 0,
        validation_auc: None,
        error: None,
    };
    let mut cfg = match config {
        Ok(c) => c,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    cfg.training.max_epochs = opts.max_epochs;
    cfg.training.patience = opts.patience;
    let train: Vec<&Example> = data.train.iter().collect();
    let validation: Vec<&Example> = data.validation.iter().collect();
    match train_model(&cfg, &train, &validation, data.max_len, derive_seed(seed, 1)) {
        Ok(out) => {
            record.epochs = out.curve.len();
            record.validation_auc = out.best_validation_auc;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record.config = Some(cfg);
    record
}

/// Draw and train trial `trial`. Depends only on the master seed and the
/// trial index, so trials may run in any order.
pub fn run_trial(space: &SearchSpace, data: &SearchData, trial: usize, opts: &SearchOptions) -> TrialRecord {
    let seed = trial_seed(opts.seed, trial);
    let assignment = sample_assignment(space, &mut child_rng(seed, 0));
    let config = realize(space, &assignment, data.input_dim);
    evaluate_config(trial, seed, assignment, config, data, opts)
}

/// Trial indices ordered best first: highest validation AUC, failures
/// last, ties by trial index.
pub fn rank_trials(trials: &[TrialRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..trials.len()).collect();
    let key = |t: &TrialRecord| t.validation_auc.filter(|v| v.is_finite()).unwrap_or(f64::NEG_INFINITY);
    order.sort_by(|&a, &b| {
        key(&trials[b])
            .total_cmp(&key(&trials[a]))
            .then(trials[a].trial.cmp(&trials[b].trial))
    });
    order
}

/// Best validation AUC among the first `n` trials, for each `n`.
pub fn best_so_far(trials: &[TrialRecord]) -> Vec<Option<f64>> {
    let mut best: Option<f64> = None;
    trials
        .iter()
        .map(|t| {
            if let Some(v) = t.validation_auc.filter(|v| v.is_finite()) {
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
            best
        })
        .collect()
}

/// Sequential search; see `run_trial` for the per-trial contract.
pub fn run_search(space: &SearchSpace, data: &SearchData, opts: &SearchOptions) -> Result<Vec<TrialRecord>> {
    space.validate()?;
    if opts.n_trials == 0 {
        return Err(Error::config("n_trials", "need at least one trial"));
    }
    Ok((0..opts.n_trials).map(|t| run_trial(space, data, t, opts)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::claims::build_timelines;
    use crate::rng::rng_from;
    use crate::synthgen::{generate, CohortConfig};

    fn all_spaces() -> Vec<SearchSpace> {
        CATALOG.iter().map(|m| SearchSpace::for_model(m).unwrap()).collect()
    }

    #[test]
    fn spaces_are_nonempty_and_hold_best_values() {
        for s in all_spaces() {
            s.validate().unwrap();
        }
        let rnn = SearchSpace::for_model("rnn").unwrap();
        let has = |s: &SearchSpace, name: &str, c: Choice| s.dims.iter().any(|d| d.name == name && d.choices.contains(&c));
        assert!(has(&rnn, "cell", Choice::text("vanilla")));
        assert!(has(&rnn, "hidden", Choice::Int(16)));
        assert!(has(&rnn, "dropout", Choice::Float(0.35)));
        assert!(has(&rnn, "alpha", Choice::Float(0.8)));
        assert!(has(&rnn, "batch_size", Choice::Int(64)));
        let ss = SearchSpace::for_model("rnnss").unwrap();
        assert!(has(&ss, "schedule", Choice::text("exponential")));
        assert!(has(&ss, "hidden", Choice::Int(128)));
        let cnn = SearchSpace::for_model("cnn").unwrap();
        assert!(has(&cnn, "start_channels", Choice::Int(64)));
        assert!(has(&cnn, "repeats", Choice::Int(7)));
        let mlp = SearchSpace::for_model("mlp").unwrap();
        assert!(has(&mlp, "fc_blocks", Choice::Int(2)));
        assert!(has(&mlp, "batch_size", Choice::Int(128)));
        let lr = SearchSpace::for_model("lr-l2").unwrap();
        assert!(has(&lr, "lambda", Choice::Float(1.0)));
        assert!(SearchSpace::for_model("xgboost").is_err());
    }

    #[test]
    fn singleton_space_gives_the_unique_config() {
        let mut s = SearchSpace::for_model("rnn").unwrap();
        for d in s.dims.iter_mut() {
            d.choices.truncate(1);
        }
        let mut rng = rng_from(1);
        let (a1, c1) = sample_config(&s, 20, &mut rng).unwrap();
        let (a2, c2) = sample_config(&s, 20, &mut rng).unwrap();
        assert_eq!((a1, c1), (a2, c2));
    }

    #[test]
    fn hidden_size_draws_are_uniform() {
        let s = SearchSpace::for_model("rnn").unwrap();
        let mut rng = rng_from(3);
        let mut counts = BTreeMap::new();
        for _ in 0..10_000 {
            let a = sample_assignment(&s, &mut rng);
            *counts.entry(alloc::format!("{:?}", a["hidden"])).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        for c in counts.values() {
            let f = *c as f64 / 10_000.0;
            assert!((f - 1.0 / 6.0).abs() < 0.02, "{f}");
        }
    }

    #[test]
    fn draws_always_build() {
        let mut rng = rng_from(4);
        for s in all_spaces() {
            if s.model == "cnn" {
                continue;
            }
            for _ in 0..20 {
                let (a, cfg) = sample_config(&s, 9, &mut rng).unwrap();
                crate::model::Model::build(&cfg, 9, 5, &mut rng_from(0)).unwrap_or_else(|e| panic!("{a:?}: {e}"));
            }
        }
        // the convolutional grid is large; build a few draws only
        let s = SearchSpace::for_model("cnn").unwrap();
        for _ in 0..3 {
            let (_, cfg) = sample_config(&s, 9, &mut rng).unwrap();
            crate::model::Model::build(&cfg, 9, 5, &mut rng_from(0)).unwrap();
        }
    }

    #[test]
    fn dependent_sizes_follow_hidden() {
        let s = SearchSpace::for_model("rnncrf").unwrap();
        let mut a = sample_assignment(&s, &mut rng_from(5));
        a.insert("hidden".into(), Choice::Int(64));
        a.insert("output_embed_div".into(), Choice::Int(3));
        a.insert("input_embed_div".into(), Choice::Int(2));
        let cfg = realize(&s, &a, 41).unwrap();
        let Architecture::Crf(c) = cfg.architecture else { panic!() };
        assert_eq!((c.stack.output_embed, c.stack.input_embed), (21, 20));
    }

    fn search_data() -> SearchData {
        let claims = generate(&CohortConfig {
            n_patients: 1500,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        prepare_search(&build_timelines(&claims).timelines, &SearchOptions::default()).unwrap()
    }

    #[test]
    fn search_is_deterministic_and_order_free() {
        let data = search_data();
        let opts = SearchOptions {
            n_trials: 3,
            seed: 9,
            max_epochs: 2,
            ..Default::default()
        };
        let space = SearchSpace::for_model("crf-unary").unwrap();
        let a = run_search(&space, &data, &opts).unwrap();
        assert_eq!(a, run_search(&space, &data, &opts).unwrap());
        assert_eq!(run_trial(&space, &data, 2, &opts), a[2]);
        let ranked = rank_trials(&a);
        assert_eq!(ranked.len(), 3);
        let best = best_so_far(&a);
        assert!(best.windows(2).all(|w| w[0] <= w[1]));
        let one = run_search(&space, &data, &SearchOptions { n_trials: 1, ..opts }).unwrap();
        assert_eq!(rank_trials(&one), vec![0]);
    }

    #[test]
    fn best_rnn_configuration_scores() {
        let data = search_data();
        let mut space = SearchSpace::for_model("rnn").unwrap();
        for (name, c) in [
            ("input_embed_div", Choice::Int(0)),
            ("cell", Choice::text("vanilla")),
            ("hidden", Choice::Int(16)),
            ("layers", Choice::Int(1)),
            ("dropout", Choice::Float(0.35)),
            ("output_embed_div", Choice::Int(0)),
            ("activation", Choice::text("relu")),
            ("lambda", Choice::Float(1e-2)),
            ("alpha", Choice::Float(0.8)),
            ("batch_size", Choice::Int(64)),
        ] {
            space.restrict(name, vec![c]).unwrap();
        }
        let opts = SearchOptions {
            n_trials: 1,
            max_epochs: 3,
            ..Default::default()
        };
        let t = run_trial(&space, &data, 0, &opts);
        assert!(t.error.is_none(), "{:?}", t.error);
        assert!(t.validation_auc.unwrap().is_finite());
    }
}
