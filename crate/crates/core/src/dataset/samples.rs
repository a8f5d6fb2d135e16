use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::clips::{group_clips, ActionClip};
use super::io::SegmentSpec;
use super::{DatasetError, FrameAnnotation};
use crate::domain::{ActionLabel, FrameRef};

/// Number of preceding clips kept as distant history.
pub const DEFAULT_HISTORY_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Ordered clips from one contiguous span of a video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoSegment {
    pub video_id: String,
    pub clips: Vec<ActionClip>,
    pub manifest_note: String,
}

/// Where extracted frames live: `root` joined with `pattern`, in which
/// `{video}` is replaced by the video id and `{frame}` by the frame index
/// zero-padded to `frame_width` digits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLayout {
    pub root: PathBuf,
    pub pattern: String,
    pub frame_width: usize,
}

impl Default for FrameLayout {
    fn default() -> Self {
        FrameLayout {
            root: PathBuf::from("frames"),
            pattern: "{video}/{frame}.png".to_string(),
            frame_width: 6,
        }
    }
}

impl FrameLayout {
    pub fn with_root(root: impl Into<PathBuf>) -> Self {
        FrameLayout {
            root: root.into(),
            ..Default::default()
        }
    }

    pub fn relative_path(&self, video_id: &str, frame_index: u64) -> PathBuf {
        let frame = format!("{:0width$}", frame_index, width = self.frame_width);
        PathBuf::from(
            self.pattern
                .replace("{video}", video_id)
                .replace("{frame}", &frame),
        )
    }

    pub fn frame_ref(&self, video_id: &str, frame_index: u64) -> FrameRef {
        FrameRef {
            video_id: video_id.to_string(),
            frame_index,
            path: self.root.join(self.relative_path(video_id, frame_index)),
        }
    }
}

/// One next-action prediction problem at clip position `step_index` (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanningSample {
    pub video_id: String,
    pub step_index: usize,
    pub history_labels: Vec<ActionLabel>,
    pub near_frame: FrameRef,
    pub current_label: ActionLabel,
    pub current_clip_start: u64,
    pub current_clip_end: u64,
    pub target_next: ActionLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookahead_next: Option<ActionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl PlanningSample {
    pub fn key(&self) -> (String, usize) {
        (self.video_id.clone(), self.step_index)
    }
}

/// Builds one sample per clip position `t` in `1..len`, where the target is
/// the label of clip `t + 1`.
pub fn build_samples(
    segment: &VideoSegment,
    history_window: usize,
    layout: &FrameLayout,
) -> Result<Vec<PlanningSample>, DatasetError> {
    if history_window == 0 {
        return Err(DatasetError::ZeroHistoryWindow);
    }
    let clips = &segment.clips;
    if clips.len() < 2 {
        return Err(DatasetError::SegmentTooShort {
            video: segment.video_id.clone(),
            clips: clips.len(),
        });
    }
    let samples = (0..clips.len() - 1)
        .map(|pos| {
            let clip = &clips[pos];
            let history_start = pos.saturating_sub(history_window);
            PlanningSample {
                video_id: segment.video_id.clone(),
                step_index: pos + 1,
                history_labels: clips[history_start..pos].iter().map(|c| c.label).collect(),
                near_frame: layout.frame_ref(&segment.video_id, clip.end_frame),
                current_label: clip.label,
                current_clip_start: clip.start_frame,
                current_clip_end: clip.end_frame,
                target_next: clips[pos + 1].label,
                lookahead_next: clips.get(pos + 2).map(|c| c.label),
                split: None,
            }
        })
        .collect();
    Ok(samples)
}

fn by_video(annotations: &[FrameAnnotation]) -> BTreeMap<&str, Vec<FrameAnnotation>> {
    let mut map: BTreeMap<&str, Vec<FrameAnnotation>> = BTreeMap::new();
    for ann in annotations {
        map.entry(ann.video_id.as_str())
            .or_default()
            .push(ann.clone());
    }
    map
}

/// Treats every annotated video as one segment.
pub fn whole_video_segments(
    annotations: &[FrameAnnotation],
    gap_tolerance: u64,
) -> Vec<VideoSegment> {
    by_video(annotations)
        .into_iter()
        .map(|(video, rows)| VideoSegment {
            video_id: video.to_string(),
            clips: group_clips(&rows, gap_tolerance),
            manifest_note: String::new(),
        })
        .collect()
}

/// Cuts segments out of the annotations using manifest frame ranges
/// (inclusive). Frames outside every range are ignored.
pub fn segments_from_manifest(
    annotations: &[FrameAnnotation],
    specs: &[SegmentSpec],
    gap_tolerance: u64,
) -> Result<Vec<VideoSegment>, DatasetError> {
    let videos = by_video(annotations);
    specs
        .iter()
        .map(|spec| {
            let rows: Vec<FrameAnnotation> = videos
                .get(spec.video_id.as_str())
                .into_iter()
                .flatten()
                .filter(|a| (spec.start_frame..=spec.end_frame).contains(&a.frame_index))
                .cloned()
                .collect();
            if rows.is_empty() {
                return Err(DatasetError::EmptySegment {
                    video: spec.video_id.clone(),
                    start: spec.start_frame,
                    end: spec.end_frame,
                });
            }
            Ok(VideoSegment {
                video_id: spec.video_id.clone(),
                clips: group_clips(&rows, gap_tolerance),
                manifest_note: spec.note.clone(),
            })
        })
        .collect()
}

/// Train/test video lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    fn assignments(&self) -> Result<BTreeMap<&str, Split>, DatasetError> {
        let mut map = BTreeMap::new();
        let listed = self
            .train
            .iter()
            .map(|v| (v, Split::Train))
            .chain(self.test.iter().map(|v| (v, Split::Test)));
        for (video, split) in listed {
            if map.insert(video.as_str(), split).is_some() {
                return Err(DatasetError::OverlappingManifest(video.clone()));
            }
        }
        Ok(map)
    }
}

/// Partitions samples by video. Returned samples carry their split tag.
pub fn split_dataset(
    samples: &[PlanningSample],
    manifest: &SplitManifest,
) -> Result<(Vec<PlanningSample>, Vec<PlanningSample>), DatasetError> {
    let assignments = manifest.assignments()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for sample in samples {
        let split = *assignments
            .get(sample.video_id.as_str())
            .ok_or_else(|| DatasetError::UnassignedVideo(sample.video_id.clone()))?;
        let mut sample = sample.clone();
        sample.split = Some(split);
        match split {
            Split::Train => train.push(sample),
            Split::Test => test.push(sample),
        }
    }
    Ok((train, test))
}

/// Distinct videos in a sample list, in first-appearance order.
pub fn videos_of(samples: &[PlanningSample]) -> Vec<&str> {
    let mut seen = BTreeSet::new();
    samples
        .iter()
        .map(|s| s.video_id.as_str())
        .filter(|v| seen.insert(*v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ActionLabel::{Dissection as D, TissueRetraction as R, VesselClipping as V};

    fn segment(labels: &[ActionLabel]) -> VideoSegment {
        VideoSegment {
            video_id: "VID01".into(),
            clips: labels
                .iter()
                .enumerate()
                .map(|(i, &label)| ActionClip {
                    video_id: "VID01".into(),
                    start_frame: i as u64 * 10,
                    end_frame: i as u64 * 10 + 9,
                    label,
                })
                .collect(),
            manifest_note: String::new(),
        }
    }

    #[test]
    fn three_clip_segment() {
        let samples = build_samples(&segment(&[D, R, V]), 5, &FrameLayout::default()).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].step_index, 1);
        assert_eq!(samples[0].target_next, R);
        assert_eq!(samples[0].lookahead_next, Some(V));
        assert!(samples[0].history_labels.is_empty());
        assert_eq!(samples[1].step_index, 2);
        assert_eq!(samples[1].target_next, V);
        assert_eq!(samples[1].lookahead_next, None);
        assert_eq!(samples[1].history_labels, vec![D]);
        assert_eq!(samples[1].near_frame.frame_index, 19);
        assert_eq!(
            samples[1].near_frame.path,
            PathBuf::from("frames/VID01/000019.png")
        );
    }

    // Enumerates the expected (t, history) pairs directly from the definition.
    #[test]
    fn window_enumeration() {
        let labels = [D, R, V, D, R, V];
        let window = 5;
        let samples = build_samples(&segment(&labels), window, &FrameLayout::default()).unwrap();
        let steps: Vec<_> = samples.iter().map(|s| s.step_index).collect();
        assert_eq!(steps, vec![1, 2, 3, 4, 5]);
        for t in 1..labels.len() {
            let expected: Vec<ActionLabel> = (1..t)
                .filter(|i| t - i <= window)
                .map(|i| labels[i - 1])
                .collect();
            assert_eq!(samples[t - 1].history_labels, expected);
        }
        assert_eq!(samples[4].history_labels.len(), 4);

        let narrow = build_samples(&segment(&labels), 2, &FrameLayout::default()).unwrap();
        assert_eq!(narrow[4].history_labels, vec![labels[2], labels[3]]);
    }

    #[test]
    fn near_frame_inside_current_clip_and_target_positional() {
        let seg = segment(&[D, R, V, R, D]);
        for s in build_samples(&seg, 5, &FrameLayout::default()).unwrap() {
            let clip = &seg.clips[s.step_index - 1];
            assert!(clip.contains(s.near_frame.frame_index));
            assert_eq!(clip.label, s.current_label);
            assert_eq!(seg.clips[s.step_index].label, s.target_next);
            assert_eq!(
                s.lookahead_next.is_none(),
                s.step_index + 1 == seg.clips.len()
            );
        }
    }

    #[test]
    fn short_segment_rejected() {
        let err = build_samples(&segment(&[D]), 5, &FrameLayout::default()).unwrap_err();
        assert!(matches!(
            err,
            DatasetError::SegmentTooShort { clips: 1, .. }
        ));
    }

    fn samples_for(videos: &[&str]) -> Vec<PlanningSample> {
        videos
            .iter()
            .flat_map(|v| {
                let mut seg = segment(&[D, R, V]);
                seg.video_id = v.to_string();
                build_samples(&seg, 5, &FrameLayout::default()).unwrap()
            })
            .collect()
    }

    #[test]
    fn split_by_video() {
        let samples = samples_for(&["A", "B", "C"]);
        let manifest = SplitManifest {
            train: vec!["A".into(), "B".into()],
            test: vec!["C".into()],
        };
        let (train, test) = split_dataset(&samples, &manifest).unwrap();
        assert_eq!(train.len(), 4);
        assert_eq!(test.len(), 2);
        assert!(test
            .iter()
            .all(|s| s.video_id == "C" && s.split == Some(Split::Test)));
        assert!(train.iter().all(|s| s.split == Some(Split::Train)));
    }

    #[test]
    fn split_errors() {
        let samples = samples_for(&["A", "B"]);
        let twice = SplitManifest {
            train: vec!["A".into(), "A".into()],
            test: vec!["B".into()],
        };
        assert!(matches!(
            split_dataset(&samples, &twice),
            Err(DatasetError::OverlappingManifest(v)) if v == "A"
        ));
        let both = SplitManifest {
            train: vec!["A".into(), "B".into()],
            test: vec!["B".into()],
        };
        assert!(matches!(
            split_dataset(&samples, &both),
            Err(DatasetError::OverlappingManifest(_))
        ));
        let missing = SplitManifest {
            train: vec!["A".into()],
            test: vec![],
        };
        assert!(matches!(
            split_dataset(&samples, &missing),
            Err(DatasetError::UnassignedVideo(v)) if v == "B"
        ));
    }

    #[test]
    fn frame_layout_pattern() {
        let layout = FrameLayout {
            root: "/data".into(),
            pattern: "{video}_{frame}.jpg".into(),
            frame_width: 4,
        };
        assert_eq!(
            layout.frame_ref("V7", 12).path,
            PathBuf::from("/data/V7_0012.jpg")
        );
    }
}
