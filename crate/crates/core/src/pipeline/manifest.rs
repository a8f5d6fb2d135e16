use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ensure_dir, io_error, PipelineError};
use crate::config::{BackendRole, Config};
use crate::fsutil::write_atomic;

pub const MANIFEST_PREFIX: &str = "manifest.";

/// Provenance of one command invocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub command_line: Vec<String>,
    pub timestamp: String,
    pub tool_version: String,
    pub config_hash: String,
    pub template_version: String,
    pub knowledge_base_hash: String,
    pub synonym_table_hash: String,
    /// Backend role to model id, for the roles the command uses.
    pub backend_models: BTreeMap<String, String>,
    /// Sample counts keyed by split name.
    pub sample_counts: BTreeMap<String, usize>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        command_line: Vec<String>,
        config: &Config,
        roles: &[BackendRole],
    ) -> Result<Self, PipelineError> {
        Ok(RunManifest {
            command: command.to_string(),
            command_line,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.digest(),
            template_version: config.run.template_version.clone(),
            knowledge_base_hash: config.knowledge_base()?.digest(),
            synonym_table_hash: config.synonyms()?.digest().to_string(),
            backend_models: roles
                .iter()
                .map(|&r| (r.name().to_string(), config.model_id(r)))
                .collect(),
            sample_counts: BTreeMap::new(),
        })
    }

    pub fn with_count(mut self, split: &str, n: usize) -> Self {
        self.sample_counts.insert(split.to_string(), n);
        self
    }

    pub fn file_name(&self) -> String {
        format!("{MANIFEST_PREFIX}{}.json", self.command)
    }

    /// Writes `manifest.<command>.json` into `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, PipelineError> {
        ensure_dir(out_dir)?;
        let path = out_dir.join(self.file_name());
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        write_atomic(&path, text.as_bytes()).map_err(io_error(&path))?;
        Ok(path)
    }
}
