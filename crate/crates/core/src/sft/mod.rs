//! Teacher distillation into conversation-format fine-tuning records.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{FrameLayout, PlanningSample, Split};
use crate::domain::{FrameRef, Goal, SynonymTable};
use crate::fsutil::{sha256_hex, write_atomic};
use crate::gateway::{run_bounded, Backend, BackendError, PlanContext};
use crate::memory::{build_memory, MemoryError, MemoryVariant};
use crate::parser::parse_plan_with;
use crate::prompts::{KnowledgeBase, PromptError, PromptFactory};

pub const SFT_SCHEMA: &str = "sft-conversation/v1";

/// Placeholder marking where an image goes in the user message.
pub const IMAGE_TOKEN: &str = "<image>";

#[derive(Debug, thiserror::Error)]
pub enum SftError {
    #[error("memory variant {0} cannot be distilled; use dir-nhfm or indir-nhfm")]
    UnsupportedVariant(&'static str),
    #[error("sample {video} step {step} is not from the training split")]
    NotTrainSample { video: String, step: usize },
    #[error("record {video} step {step} references test-split video {video}")]
    TestSplitLeak { video: String, step: usize },
    #[error("record {video} step {step} has an assistant message that does not parse: {reason}")]
    UnparseableAssistant {
        video: String,
        step: usize,
        reason: String,
    },
    #[error("teacher backend failed: {0}")]
    Backend(BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    /// Path relative to the frame root.
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ImageRef>,
    pub memory_variant: MemoryVariant,
    pub video_id: String,
    pub step_index: usize,
    pub split: Split,
    pub teacher_model: String,
}

impl SftRecord {
    pub fn assistant_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::Assistant)
            .map(|m| m.content.as_str())
    }
}

/// A training sample left out of the export, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExclusion {
    pub video_id: String,
    pub step_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Distillation {
    pub records: Vec<SftRecord>,
    pub exclusions: Vec<SftExclusion>,
}

/// Everything needed to turn a sample into a teacher conversation.
pub struct DistillSetup<'a> {
    pub teacher: &'a dyn Backend,
    pub captioner: Option<&'a dyn Backend>,
    pub variant: MemoryVariant,
    pub factory: &'a PromptFactory,
    pub kb: &'a KnowledgeBase,
    pub goal: &'a Goal,
    pub synonyms: &'a SynonymTable,
    pub layout: &'a FrameLayout,
    pub parallelism: usize,
}

fn image_ref(layout: &FrameLayout, frame: &FrameRef) -> Result<ImageRef, MemoryError> {
    let bytes = std::fs::read(&frame.path)
        .map_err(|_| MemoryError::MissingFrameFile(frame.path.display().to_string()))?;
    Ok(ImageRef {
        path: layout.relative_path(&frame.video_id, frame.frame_index),
        sha256: sha256_hex(&bytes),
    })
}

enum Outcome {
    Record(SftRecord),
    Excluded(String),
}

fn distill_one(setup: &DistillSetup, sample: &PlanningSample) -> Result<Outcome, SftError> {
    let memory = match build_memory(sample, setup.variant, setup.captioner) {
        Ok(m) => m,
        Err(MemoryError::Backend(e)) if is_fatal(&e) => return Err(SftError::Backend(e)),
        Err(e) => return Ok(Outcome::Excluded(format!("memory: {e}"))),
    };
    let bundle = setup.factory.ap_prompt(&memory, setup.goal, setup.kb)?;
    let context = PlanContext {
        video_id: sample.video_id.clone(),
        step_index: sample.step_index,
        future: std::iter::once(sample.target_next)
            .chain(sample.lookahead_next)
            .collect(),
    };
    let request = match bundle.to_request(Some(context)) {
        Ok(r) => r,
        Err(e) => return Ok(Outcome::Excluded(format!("attachment: {e}"))),
    };
    let response = match setup.teacher.complete(&request) {
        Ok(r) => r,
        Err(e) if is_fatal(&e) => return Err(SftError::Backend(e)),
        Err(e) => return Ok(Outcome::Excluded(format!("teacher: {e}"))),
    };
    if let Err(e) = parse_plan_with(&response.text, setup.synonyms) {
        return Ok(Outcome::Excluded(format!("parse gate: {e}")));
    }
    let mut images = Vec::new();
    for frame in &bundle.image_attachments {
        match image_ref(setup.layout, frame) {
            Ok(img) => images.push(img),
            Err(e) => return Ok(Outcome::Excluded(format!("image: {e}"))),
        }
    }
    let mut user = IMAGE_TOKEN.repeat(images.len());
    user.push_str(&bundle.user_text);
    let mut messages = Vec::new();
    if !bundle.system_text.is_empty() {
        messages.push(Message {
            role: Role::System,
            content: bundle.system_text,
        });
    }
    messages.push(Message {
        role: Role::User,
        content: user,
    });
    messages.push(Message {
        role: Role::Assistant,
        content: response.text,
    });
    Ok(Outcome::Record(SftRecord {
        messages,
        images,
        memory_variant: setup.variant,
        video_id: sample.video_id.clone(),
        step_index: sample.step_index,
        split: Split::Train,
        teacher_model: response.backend_id,
    }))
}

/// Errors that no retry or other sample can fix.
fn is_fatal(e: &BackendError) -> bool {
    matches!(
        e,
        BackendError::AuthMissing(_) | BackendError::Config(_) | BackendError::Cache(_)
    )
}

/// Queries the teacher for every sample and keeps responses that parse.
pub fn distill(samples: &[PlanningSample], setup: &DistillSetup) -> Result<Distillation, SftError> {
    if !matches!(
        setup.variant,
        MemoryVariant::DirNhfm | MemoryVariant::IndirNhfm
    ) {
        return Err(SftError::UnsupportedVariant(setup.variant.name()));
    }
    if let Some(s) = samples.iter().find(|s| s.split != Some(Split::Train)) {
        return Err(SftError::NotTrainSample {
            video: s.video_id.clone(),
            step: s.step_index,
        });
    }
    let outcomes = run_bounded(samples, setup.parallelism, |_, s| distill_one(setup, s));
    let mut out = Distillation::default();
    for (sample, outcome) in samples.iter().zip(outcomes) {
        match outcome? {
            Outcome::Record(r) => out.records.push(r),
            Outcome::Excluded(reason) => {
                log::warn!(
                    "sft: excluding {} step {}: {reason}",
                    sample.video_id,
                    sample.step_index
                );
                out.exclusions.push(SftExclusion {
                    video_id: sample.video_id.clone(),
                    step_index: sample.step_index,
                    reason,
                });
            }
        }
    }
    Ok(out)
}

/// Deterministic subset of at most `n` records.
pub fn sample_records(records: &[SftRecord], n: usize, seed: u64) -> Vec<SftRecord> {
    let mut picked = records.to_vec();
    picked.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    picked.truncate(n);
    picked
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub schema: String,
    pub records: usize,
    pub per_variant: BTreeMap<String, usize>,
    pub teacher_models: BTreeSet<String>,
    #[serde(default)]
    pub excluded: usize,
}

/// Companion manifest path: `<file>.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// Writes one JSON record per line sorted by (video, step, variant) and a
/// companion manifest. Fails without writing if any record belongs to a video
/// in `test_videos` or the test split, or if an assistant message no longer
/// parses.
pub fn export(
    records: &[SftRecord],
    path: &Path,
    test_videos: &BTreeSet<String>,
    synonyms: &SynonymTable,
    excluded: usize,
) -> Result<ExportManifest, SftError> {
    for r in records {
        if r.split == Split::Test || test_videos.contains(&r.video_id) {
            return Err(SftError::TestSplitLeak {
                video: r.video_id.clone(),
                step: r.step_index,
            });
        }
        let reparse = r
            .assistant_text()
            .ok_or_else(|| "no assistant message".to_string())
            .and_then(|text| parse_plan_with(text, synonyms).map_err(|e| e.to_string()));
        if let Err(reason) = reparse {
            return Err(SftError::UnparseableAssistant {
                video: r.video_id.clone(),
                step: r.step_index,
                reason,
            });
        }
    }
    let mut sorted: Vec<&SftRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.video_id, a.step_index, a.memory_variant.name()).cmp(&(
            &b.video_id,
            b.step_index,
            b.memory_variant.name(),
        ))
    });
    let mut body = String::new();
    for r in &sorted {
        body.push_str(&serde_json::to_string(r).expect("records serialize"));
        body.push('\n');
    }
    let io = |source| SftError::Io {
        path: path.to_path_buf(),
        source,
    };
    write_atomic(path, body.as_bytes()).map_err(io)?;

    let mut per_variant = BTreeMap::new();
    for r in records {
        *per_variant
            .entry(r.memory_variant.name().to_string())
            .or_insert(0) += 1;
    }
    let manifest = ExportManifest {
        schema: SFT_SCHEMA.to_string(),
        records: records.len(),
        per_variant,
        teacher_models: records.iter().map(|r| r.teacher_model.clone()).collect(),
        excluded,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let mpath = manifest_path(path);
    write_atomic(&mpath, text.as_bytes()).map_err(|source| SftError::Io {
        path: mpath,
        source,
    })?;
    Ok(manifest)
}

/// Reads an exported file back.
pub fn read_export(path: &Path) -> Result<Vec<SftRecord>, SftError> {
    let text = std::fs::read_to_string(path).map_err(|source| SftError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| SftError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
