use serde::{Deserialize, Serialize};

use super::FrameAnnotation;
use crate::domain::ActionLabel;

/// Only strictly contiguous frames merge into one clip.
pub const DEFAULT_GAP_TOLERANCE: u64 = 1;

/// Maximal run of frames sharing one label. `end_frame` is inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionClip {
    pub video_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub label: ActionLabel,
}

impl ActionClip {
    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: u64) -> bool {
        (self.start_frame..=self.end_frame).contains(&frame)
    }
}

/// Run-length encodes annotations that are already sorted by
/// `(video_id, frame_index)`.
///
/// A new clip starts on a video change, a label change, or when the step to
/// the next frame index exceeds `gap_tolerance`.
pub fn group_clips(annotations: &[FrameAnnotation], gap_tolerance: u64) -> Vec<ActionClip> {
    let mut clips: Vec<ActionClip> = Vec::new();
    for ann in annotations {
        if let Some(last) = clips.last_mut() {
            let continues = last.video_id == ann.video_id
                && last.label == ann.label
                && ann.frame_index > last.end_frame
                && ann.frame_index - last.end_frame <= gap_tolerance;
            if continues {
                last.end_frame = ann.frame_index;
                continue;
            }
        }
        clips.push(ActionClip {
            video_id: ann.video_id.clone(),
            start_frame: ann.frame_index,
            end_frame: ann.frame_index,
            label: ann.label,
        });
    }
    clips
}

/// Inverse of [`group_clips`] for contiguous clips: one annotation per frame.
pub fn expand_clips(clips: &[ActionClip]) -> Vec<FrameAnnotation> {
    clips
        .iter()
        .flat_map(|clip| {
            (clip.start_frame..=clip.end_frame).map(move |frame_index| FrameAnnotation {
                video_id: clip.video_id.clone(),
                frame_index,
                label: clip.label,
            })
        })
        .collect()
}
