use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{ensure_dir, io_error, PipelineError, RunManifest, SAMPLES_TEST, SAMPLES_TRAIN};
use crate::dataset::{
    build_samples, ingest_annotation_files, read_segment_manifest, read_split_manifest,
    segments_from_manifest, split_dataset, videos_of, whole_video_segments, write_samples,
    FrameLayout, PlanningSample,
};
use crate::domain::SynonymTable;
use crate::fsutil::write_atomic;

pub struct BuildDatasetArgs {
    pub annotations: Vec<PathBuf>,
    /// Optional `video_id,start_frame,end_frame,note` CSV; whole videos otherwise.
    pub segments: Option<PathBuf>,
    pub train_list: PathBuf,
    pub test_list: PathBuf,
    pub out_dir: PathBuf,
    pub layout: FrameLayout,
    pub history_window: usize,
    pub gap_tolerance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub videos: usize,
    pub clips: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub annotated_frames: usize,
    pub segments: usize,
    pub splits: BTreeMap<String, SplitSummary>,
}

/// Annotations to clips to samples to splits. Writes `train.jsonl`,
/// `test.jsonl` and `summary.json`.
pub fn cmd_build_dataset(
    args: &BuildDatasetArgs,
    synonyms: &SynonymTable,
    manifest: RunManifest,
) -> Result<DatasetSummary, PipelineError> {
    ensure_dir(&args.out_dir)?;
    let annotations = ingest_annotation_files(&args.annotations, synonyms)?;
    let segments = match &args.segments {
        Some(path) => segments_from_manifest(
            &annotations,
            &read_segment_manifest(path)?,
            args.gap_tolerance,
        )?,
        None => whole_video_segments(&annotations, args.gap_tolerance),
    };
    let mut samples = Vec::new();
    for segment in &segments {
        samples.extend(build_samples(segment, args.history_window, &args.layout)?);
    }
    let split_manifest = read_split_manifest(&args.train_list, &args.test_list)?;
    let (train, test) = split_dataset(&samples, &split_manifest)?;

    manifest
        .with_count("train", train.len())
        .with_count("test", test.len())
        .write(&args.out_dir)?;
    write_samples(&args.out_dir.join(SAMPLES_TRAIN), &train)?;
    write_samples(&args.out_dir.join(SAMPLES_TEST), &test)?;

    let summarize = |split: &[PlanningSample]| {
        let videos = videos_of(split);
        SplitSummary {
            videos: videos.len(),
            clips: segments
                .iter()
                .filter(|s| videos.contains(&s.video_id.as_str()))
                .map(|s| s.clips.len())
                .sum(),
            samples: split.len(),
        }
    };
    let summary = DatasetSummary {
        annotated_frames: annotations.len(),
        segments: segments.len(),
        splits: [
            ("train".to_string(), summarize(&train)),
            ("test".to_string(), summarize(&test)),
        ]
        .into(),
    };
    let path = args.out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_atomic(&path, text.as_bytes()).map_err(io_error(&path))?;
    Ok(summary)
}
