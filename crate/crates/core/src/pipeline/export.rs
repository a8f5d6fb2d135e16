use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{ensure_dir, write_jsonl, PipelineError, RunManifest};
use crate::dataset::{FrameLayout, PlanningSample};
use crate::domain::{Goal, SynonymTable};
use crate::gateway::Backend;
use crate::memory::MemoryVariant;
use crate::prompts::{KnowledgeBase, PromptFactory};
use crate::sft::{self, distill, sample_records, DistillSetup, ExportManifest};

pub struct ExportSftArgs<'a> {
    pub teacher: &'a dyn Backend,
    pub captioner: Option<&'a dyn Backend>,
    pub variants: Vec<MemoryVariant>,
    pub factory: PromptFactory,
    pub kb: &'a KnowledgeBase,
    pub goal: &'a Goal,
    pub synonyms: &'a SynonymTable,
    pub layout: &'a FrameLayout,
    pub parallelism: usize,
    /// Output JSONL path; exclusions go next to it.
    pub out: PathBuf,
    /// Keep at most this many records per variant, chosen with the seed.
    pub per_variant_limit: Option<(usize, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub manifest: ExportManifest,
    pub excluded_per_variant: BTreeMap<String, usize>,
}

/// Distills training samples for each variant and exports the records.
/// Test videos are checked again at export time.
pub fn cmd_export_sft(
    args: &ExportSftArgs,
    train: &[PlanningSample],
    test_videos: &BTreeSet<String>,
    manifest: RunManifest,
) -> Result<ExportSummary, PipelineError> {
    let out_dir = args
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    ensure_dir(&out_dir)?;
    if let Some(s) = train.iter().find(|s| test_videos.contains(&s.video_id)) {
        return Err(PipelineError::Invalid(format!(
            "training sample {} step {} belongs to a test video",
            s.video_id, s.step_index
        )));
    }
    manifest.with_count("train", train.len()).write(&out_dir)?;

    let mut records = Vec::new();
    let mut exclusions = Vec::new();
    let mut excluded_per_variant = BTreeMap::new();
    for &variant in &args.variants {
        let setup = DistillSetup {
            teacher: args.teacher,
            captioner: args.captioner,
            variant,
            factory: &args.factory,
            kb: args.kb,
            goal: args.goal,
            synonyms: args.synonyms,
            layout: args.layout,
            parallelism: args.parallelism,
        };
        let out = distill(train, &setup)?;
        excluded_per_variant.insert(variant.name().to_string(), out.exclusions.len());
        let kept = match args.per_variant_limit {
            Some((n, seed)) => sample_records(&out.records, n, seed),
            None => out.records,
        };
        records.extend(kept);
        exclusions.extend(out.exclusions);
    }
    let manifest = sft::export(
        &records,
        &args.out,
        test_videos,
        args.synonyms,
        exclusions.len(),
    )?;
    write_jsonl(&out_dir.join("sft_exclusions.jsonl"), &exclusions)?;
    Ok(ExportSummary {
        manifest,
        excluded_per_variant,
    })
}
