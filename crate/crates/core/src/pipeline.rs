//! Checkpoint directories and report files shared by the CLI and the test
//! harness. A checkpoint directory holds `params.bin`, `params.txt` (the
//! numkit container plus manifest) and `model.cfg`, a TOML file with the
//! model configuration and the encoding specs it was trained under.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::EncodingSpec;
use crate::models::{EncodingDims, Model, ModelConfig, ModelError};
use crate::numkit::checkpoint::{load_params, save_params};
use crate::numkit::NumError;
use crate::trainer::{BinRow, Metrics};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error on {0}: {1}")]
    Io(std::path::PathBuf, std::io::Error),
    #[error("bad checkpoint meta: {0}")]
    Meta(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
    dims: EncodingDims,
    pattern_spec: EncodingSpec,
    graph_spec: EncodingSpec,
}

pub struct SavedModel {
    pub model: Model,
    pub pattern_spec: EncodingSpec,
    pub graph_spec: EncodingSpec,
}

pub fn save_model(
    model: &Model,
    pattern_spec: &EncodingSpec,
    graph_spec: &EncodingSpec,
    dir: &Path,
) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::Io(dir.to_path_buf(), e))?;
    save_params(&model.store, &dir.join("params.bin"), &dir.join("params.txt"))?;
    let meta = CheckpointMeta {
        model: model.config.clone(),
        dims: model.dims,
        pattern_spec: *pattern_spec,
        graph_spec: *graph_spec,
    };
    let text = toml::to_string_pretty(&meta).map_err(|e| PipelineError::Meta(e.to_string()))?;
    let path = dir.join("model.cfg");
    fs::write(&path, text).map_err(|e| PipelineError::Io(path, e))
}

pub fn load_model(dir: &Path) -> Result<SavedModel, PipelineError> {
    let path = dir.join("model.cfg");
    let text = fs::read_to_string(&path).map_err(|e| PipelineError::Io(path, e))?;
    let meta: CheckpointMeta =
        toml::from_str(&text).map_err(|e| PipelineError::Meta(e.to_string()))?;
    let store = load_params(&dir.join("params.bin"))?;
    let model = Model { config: meta.model, dims: meta.dims, store };
    Ok(SavedModel { model, pattern_spec: meta.pattern_spec, graph_spec: meta.graph_spec })
}

/// One metrics record as a plain-text line plus machine-readable JSON.
pub fn write_metrics(metrics: &Metrics, label: &str, dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::Io(dir.to_path_buf(), e))?;
    let line = format!(
        "{label} rmse={:.6} mae={:.6} examples={} wall_ms={}\n",
        metrics.rmse,
        metrics.mae,
        metrics.examples,
        metrics.wall.as_millis()
    );
    let path = dir.join("metrics.txt");
    let mut existing = fs::read_to_string(&path).unwrap_or_default();
    existing.push_str(&line);
    fs::write(&path, existing).map_err(|e| PipelineError::Io(path, e))?;

    let json = serde_json::json!({
        "label": label,
        "rmse": metrics.rmse,
        "mae": metrics.mae,
        "examples": metrics.examples,
        "wall_ms": metrics.wall.as_millis() as u64,
    });
    let path = dir.join(format!("metrics_{label}.json"));
    fs::write(&path, json.to_string() + "\n").map_err(|e| PipelineError::Io(path, e))
}

/// Per-bin breakdown tables for the prediction-vs-truth charts.
pub fn write_bins_csv(bins: &[BinRow], path: &Path) -> Result<(), PipelineError> {
    let mut out = String::from("ordering,pattern_size,graph_size,examples,mean_truth,mean_pred,rmse,mae\n");
    for b in bins {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
            b.ordering, b.pattern_size, b.graph_size, b.examples, b.mean_truth, b.mean_pred, b.rmse, b.mae
        ));
    }
    fs::write(path, out).map_err(|e| PipelineError::Io(path.to_path_buf(), e))
}
