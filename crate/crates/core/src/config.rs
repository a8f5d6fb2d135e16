//! Run configuration read from a TOML file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{FrameLayout, DEFAULT_GAP_TOLERANCE, DEFAULT_HISTORY_WINDOW};
use crate::domain::{Goal, SynonymTable};
use crate::fsutil::sha256_hex;
use crate::gateway::mock::{MockCaptioner, MockPlanner, MockPolicy};
use crate::gateway::{Backend, BackendConfig, Gateway, HttpTransport, ResponseCache};
use crate::memory::MemoryVariant;
use crate::metrics::RelaxedPolicy;
use crate::prompts::{KnowledgeBase, PromptError, TEMPLATE_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// OpenAI-compatible HTTP endpoint.
    #[default]
    Http,
    /// In-process mock; never touches the network.
    Mock,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// Mock planner policy: `oracle`, `constant:<Label>`, `random:<seed>` or `scripted`.
    pub mock_policy: Option<String>,
    /// TSV script for the `scripted` mock policy.
    pub script: Option<PathBuf>,
    /// Fixed mock caption text; by default captions describe the image hash.
    pub mock_caption: Option<String>,
    #[serde(flatten)]
    pub http: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub variant: String,
    pub history_window: usize,
    pub gap_tolerance: u64,
    pub goal: String,
    pub template_version: String,
    pub relaxed_policy: RelaxedPolicy,
    /// Ask the planner once to reformat responses that fail to parse.
    pub repair: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            variant: MemoryVariant::DirNhfm.name().to_string(),
            history_window: DEFAULT_HISTORY_WINDOW,
            gap_tolerance: DEFAULT_GAP_TOLERANCE,
            goal: Goal::DEFAULT_TEXT.to_string(),
            template_version: TEMPLATE_VERSION.to_string(),
            relaxed_policy: RelaxedPolicy::default(),
            repair: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsSection {
    pub frames_root: PathBuf,
    pub frame_pattern: String,
    pub frame_width: usize,
    pub cache_dir: PathBuf,
    pub knowledge_base: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
}

impl Default for PathsSection {
    fn default() -> Self {
        let layout = FrameLayout::default();
        PathsSection {
            frames_root: layout.root,
            frame_pattern: layout.pattern,
            frame_width: layout.frame_width,
            cache_dir: PathBuf::from("cache"),
            knowledge_base: None,
            synonyms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub run: RunSection,
    pub paths: PathsSection,
    pub planner: BackendSection,
    pub captioner: BackendSection,
    pub teacher: BackendSection,
}

/// Keys that would put a secret into the config file.
const SECRET_KEYS: [&str; 3] = ["api_key", "apikey", "token"];

fn reject_secrets(value: &toml::Value, at: &str) -> Result<(), String> {
    if let toml::Value::Table(table) = value {
        for (key, inner) in table {
            let path = if at.is_empty() {
                key.clone()
            } else {
                format!("{at}.{key}")
            };
            if SECRET_KEYS.contains(&key.to_ascii_lowercase().as_str()) {
                return Err(format!(
                    "{path}: API keys are read from the environment variable named by api_key_env, never from the config file"
                ));
            }
            reject_secrets(inner, &path)?;
        }
    }
    Ok(())
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let parse_err = |message: String| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let value: toml::Value = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        reject_secrets(&value, "").map_err(parse_err)?;
        let mut config: Config = value
            .try_into()
            .map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Config::parse(&text, path)
    }

    /// Makes relative paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.frames_root);
        fix(&mut self.paths.cache_dir);
        for p in [&mut self.paths.knowledge_base, &mut self.paths.synonyms]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        for section in [&mut self.planner, &mut self.captioner, &mut self.teacher] {
            if let Some(p) = section.script.as_mut() {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.variant()?;
        self.goal()?;
        if self.run.history_window == 0 {
            return Err(ConfigError::Invalid(
                "run.history_window must be at least 1".into(),
            ));
        }
        if self.paths.frame_width == 0 || !self.paths.frame_pattern.contains("{frame}") {
            return Err(ConfigError::Invalid(
                "paths.frame_pattern must contain {frame} and frame_width must be positive".into(),
            ));
        }
        for (name, section) in self.sections() {
            if section.kind == BackendKind::Http {
                section
                    .http
                    .validate()
                    .map_err(|e| ConfigError::Invalid(format!("[{name}] {e}")))?;
            }
        }
        Ok(())
    }

    fn sections(&self) -> [(&'static str, &BackendSection); 3] {
        [
            ("planner", &self.planner),
            ("captioner", &self.captioner),
            ("teacher", &self.teacher),
        ]
    }

    pub fn variant(&self) -> Result<MemoryVariant, ConfigError> {
        self.run.variant.parse().map_err(ConfigError::Invalid)
    }

    pub fn goal(&self) -> Result<Goal, ConfigError> {
        Goal::new(self.run.goal.clone()).map_err(|e| ConfigError::Invalid(format!("run.goal: {e}")))
    }

    pub fn layout(&self) -> FrameLayout {
        FrameLayout {
            root: self.paths.frames_root.clone(),
            pattern: self.paths.frame_pattern.clone(),
            frame_width: self.paths.frame_width,
        }
    }

    pub fn knowledge_base(&self) -> Result<KnowledgeBase, ConfigError> {
        match &self.paths.knowledge_base {
            Some(p) => Ok(KnowledgeBase::load(p)?),
            None => Ok(KnowledgeBase::builtin().clone()),
        }
    }

    pub fn synonyms(&self) -> Result<SynonymTable, ConfigError> {
        match &self.paths.synonyms {
            Some(p) => SynonymTable::load(p).map_err(|e| ConfigError::Invalid(e.to_string())),
            None => Ok(SynonymTable::builtin().clone()),
        }
    }

    /// Hash of the canonical serialization, so formatting changes do not
    /// change it.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        sha256_hex(text.as_bytes())
    }
}

/// Which configured backend to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendRole {
    Planner,
    Captioner,
    Teacher,
}

impl BackendRole {
    pub fn name(self) -> &'static str {
        match self {
            BackendRole::Planner => "planner",
            BackendRole::Captioner => "captioner",
            BackendRole::Teacher => "teacher",
        }
    }
}

impl Config {
    pub fn section(&self, role: BackendRole) -> &BackendSection {
        match role {
            BackendRole::Planner => &self.planner,
            BackendRole::Captioner => &self.captioner,
            BackendRole::Teacher => &self.teacher,
        }
    }

    /// Model id recorded in run manifests.
    pub fn model_id(&self, role: BackendRole) -> String {
        let s = self.section(role);
        match s.kind {
            BackendKind::Http => format!("http:{}", s.http.model_name),
            BackendKind::Mock if role == BackendRole::Captioner => "mock:captioner".into(),
            BackendKind::Mock => format!("mock:{}", s.mock_policy.as_deref().unwrap_or("oracle")),
        }
    }

    /// Builds the backend for `role`. HTTP backends share the on-disk cache
    /// under `paths.cache_dir`.
    pub fn backend(&self, role: BackendRole) -> Result<Arc<dyn Backend>, ConfigError> {
        let s = self.section(role);
        let invalid = |e: crate::gateway::BackendError| {
            ConfigError::Invalid(format!("[{}] {e}", role.name()))
        };
        match s.kind {
            BackendKind::Http => {
                let cache = ResponseCache::open(&self.paths.cache_dir).map_err(invalid)?;
                let transport = HttpTransport::new().map_err(|e| {
                    ConfigError::Invalid(format!("[{}] building HTTP client: {e:?}", role.name()))
                })?;
                Ok(Arc::new(
                    Gateway::new(s.http.clone(), transport, Some(cache)).map_err(invalid)?,
                ))
            }
            BackendKind::Mock if role == BackendRole::Captioner => Ok(match &s.mock_caption {
                Some(text) => Arc::new(MockCaptioner::fixed(text.clone())),
                None => Arc::new(MockCaptioner::describing()),
            }),
            BackendKind::Mock => {
                let policy = match s.mock_policy.as_deref().unwrap_or("oracle") {
                    "scripted" => {
                        let path = s.script.as_ref().ok_or_else(|| {
                            ConfigError::Invalid(format!(
                                "[{}] scripted mock needs `script`",
                                role.name()
                            ))
                        })?;
                        MockPolicy::Scripted(MockPolicy::load_script(path).map_err(invalid)?)
                    }
                    other => other.parse().map_err(invalid)?,
                };
                Ok(Arc::new(MockPlanner::new(policy)))
            }
        }
    }
}
