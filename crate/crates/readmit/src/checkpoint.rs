//! Per-fold model checkpoints: the resolved config, the fitted feature
//! spec, a tensor manifest and the raw parameter values as little-endian
//! f64.

use std::fs;
use std::path::{Path, PathBuf};

use readmit_core::featurizer::FeatureSpec;
use readmit_core::model::{Model, ModelConfig};
use readmit_core::numerics::{Parameters, Role};
use readmit_core::rng::rng_from;
use readmit_core::trainer::FoldRun;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{read_json, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub role: Role,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub fold: usize,
    pub max_len: usize,
    pub input_dim: usize,
    pub lambda: f64,
    pub best_epoch: usize,
    pub best_validation_auc: Option<f64>,
    pub tensors: Vec<TensorEntry>,
}

/// A restored fold model with what is needed to featurize new timelines.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub spec: FeatureSpec,
    pub meta: CheckpointMeta,
    pub model: Model,
}

pub fn fold_dir(run_dir: &Path, fold: usize) -> PathBuf {
    run_dir.join(format!("fold_{fold}"))
}

pub fn save(dir: &Path, config: &ModelConfig, run: &FoldRun) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let model = &run.outcome.model;
    let params = model.params();
    let meta = CheckpointMeta {
        fold: run.fold,
        max_len: run.max_len,
        input_dim: run.spec.d,
        lambda: run.lambda,
        best_epoch: run.outcome.best_epoch,
        best_validation_auc: run.outcome.best_validation_auc,
        tensors: params
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                role: p.role,
                rows: p.value.rows,
                cols: p.value.cols,
            })
            .collect(),
    };
    let bytes: Vec<u8> = params
        .iter()
        .flat_map(|p| p.value.data.iter().flat_map(|v| v.to_le_bytes()))
        .collect();
    write_json(&dir.join("config.json"), config)?;
    write_json(&dir.join("spec.json"), &run.spec)?;
    write_json(&dir.join("meta.json"), &meta)?;
    fs::write(dir.join("params.bin"), bytes)?;
    Ok(())
}

pub fn load(dir: &Path) -> CliResult<Checkpoint> {
    if !dir.is_dir() {
        return Err(CliError::missing(dir, "checkpoint directory not found"));
    }
    let config: ModelConfig = read_json(&dir.join("config.json"))?;
    let spec: FeatureSpec = read_json(&dir.join("spec.json"))?;
    let meta: CheckpointMeta = read_json(&dir.join("meta.json"))?;
    let bin = dir.join("params.bin");
    let bytes = fs::read(&bin).map_err(|e| CliError::missing(&bin, e))?;
    let mut model = Model::build(&config, meta.input_dim, meta.max_len, &mut rng_from(0))?;
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let corrupt = |why: String| CliError::Config(format!("{}: {why}", bin.display()));
    let params = model.params_mut();
    if params.len() != meta.tensors.len() || bytes.len() % 8 != 0 {
        return Err(corrupt("tensor list does not match the model".into()));
    }
    for (p, t) in params.into_iter().zip(&meta.tensors) {
        if p.name != t.name || p.value.rows != t.rows || p.value.cols != t.cols {
            return Err(corrupt(format!("tensor {} does not match {}", t.name, p.name)));
        }
        for slot in p.value.data.iter_mut() {
            *slot = values.next().ok_or_else(|| corrupt("too few values".into()))?;
        }
    }
    if values.next().is_some() {
        return Err(corrupt("trailing values".into()));
    }
    Ok(Checkpoint {
        config,
        spec,
        meta,
        model,
    })
}

/// Load every `fold_*` checkpoint of a run directory, in fold order.
pub fn load_all(run_dir: &Path, k: usize) -> CliResult<Vec<Checkpoint>> {
    (0..k).map(|f| load(&fold_dir(run_dir, f))).collect()
}
