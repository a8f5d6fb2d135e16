//! Per-frame annotations to action clips, planning samples and splits.

mod clips;
mod io;
mod samples;

pub use clips::{expand_clips, group_clips, ActionClip, DEFAULT_GAP_TOLERANCE};
pub use io::{
    ingest_annotation_files, ingest_annotations, read_samples, read_segment_manifest,
    read_split_manifest, write_samples, SegmentSpec,
};
pub use samples::{
    build_samples, segments_from_manifest, split_dataset, videos_of, whole_video_segments,
    FrameLayout, PlanningSample, Split, SplitManifest, VideoSegment, DEFAULT_HISTORY_WINDOW,
};

use serde::{Deserialize, Serialize};

use crate::domain::ActionLabel;

/// One annotated frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub video_id: String,
    pub frame_index: u64,
    pub label: ActionLabel,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{file}:{line}: malformed row: {reason}")]
    MalformedRow {
        file: String,
        line: u64,
        reason: String,
    },
    #[error("duplicate annotation for video {video} frame {frame}")]
    DuplicateFrame { video: String, frame: u64 },
    #[error("{file}:{line}: unknown action {raw:?}")]
    UnknownAction {
        file: String,
        line: u64,
        raw: String,
    },
    #[error("segment of video {video} has {clips} clip(s); at least 2 are required")]
    SegmentTooShort { video: String, clips: usize },
    #[error("segment {video} [{start}, {end}] contains no annotated frames")]
    EmptySegment { video: String, start: u64, end: u64 },
    #[error("video {0} is not listed in the split manifest")]
    UnassignedVideo(String),
    #[error("video {0} is listed more than once in the split manifest")]
    OverlappingManifest(String),
    #[error("history window must be positive")]
    ZeroHistoryWindow,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: invalid sample record: {source}")]
    SampleRecord {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}
