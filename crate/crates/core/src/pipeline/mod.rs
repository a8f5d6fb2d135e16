//! Pipeline commands behind the command-line tool. Every command writes a
//! run manifest into its output directory before touching any backend.

mod build;
mod evaluate;
mod export;
mod manifest;
mod plan;

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::ConfigError;
use crate::dataset::DatasetError;
use crate::fsutil::write_atomic;
use crate::gateway::BackendError;
use crate::metrics::MetricsError;
use crate::prompts::PromptError;
use crate::sft::SftError;

pub use build::{cmd_build_dataset, BuildDatasetArgs, DatasetSummary};
pub use evaluate::{cmd_evaluate, cmd_report, EvaluateArgs};
pub use export::{cmd_export_sft, ExportSftArgs, ExportSummary};
pub use manifest::{RunManifest, MANIFEST_PREFIX};
pub use plan::{
    cmd_caption, cmd_plan, cmd_rollout, CaptionLine, CaptionSummary, PlanEnv, PlanSummary,
    PlannedSample, ResponseLine, RolloutArgs, RolloutResult,
};

pub const SAMPLES_TRAIN: &str = "train.jsonl";
pub const SAMPLES_TEST: &str = "test.jsonl";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const FAILURES: &str = "failures.jsonl";
pub const RESPONSES: &str = "responses.jsonl";
pub const CAPTIONS: &str = "captions.jsonl";
pub const REPORT_TABLE: &str = "report.tsv";
pub const AUDIT: &str = "audit.tsv";
pub const METRICS_JSON: &str = "metrics.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sft(#[from] SftError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl PipelineError {
    /// Whether the error comes from bad configuration or arguments rather
    /// than from running the pipeline.
    pub fn is_configuration(&self) -> bool {
        match self {
            PipelineError::Config(_) | PipelineError::Invalid(_) | PipelineError::Prompt(_) => true,
            PipelineError::Backend(e) => {
                matches!(e, BackendError::AuthMissing(_) | BackendError::Config(_))
            }
            PipelineError::Sft(SftError::UnsupportedVariant(_)) => true,
            _ => false,
        }
    }
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(io_error(dir))
}

/// Writes one JSON value per line, atomically.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut buf = String::new();
    for item in items {
        buf.push_str(&serde_json::to_string(item).expect("records serialize"));
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes()).map_err(io_error(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
