//! Synthetic annotated videos for tests and demos.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{FrameLayout, Split};
use crate::domain::ActionLabel;

/// Shape of one generated video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoShape {
    pub video_id: String,
    pub clips: usize,
    pub split: Split,
}

/// Files written by [`generate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticDataset {
    pub annotations: PathBuf,
    pub train_list: PathBuf,
    pub test_list: PathBuf,
    pub layout: FrameLayout,
    /// Clip label sequence per video, in `shapes` order.
    pub clip_labels: Vec<(String, Vec<ActionLabel>)>,
}

/// 15 test videos with 57 planning samples in total (12 with five clips and
/// 3 with four), plus `train_videos` training videos of five clips.
pub fn test_split_shape(train_videos: usize) -> Vec<VideoShape> {
    let mut shapes: Vec<VideoShape> = (0..15)
        .map(|i| VideoShape {
            video_id: format!("T{:02}", i + 1),
            clips: if i < 12 { 5 } else { 4 },
            split: Split::Test,
        })
        .collect();
    shapes.extend((0..train_videos).map(|i| VideoShape {
        video_id: format!("R{:02}", i + 1),
        clips: 5,
        split: Split::Train,
    }));
    shapes
}

/// Writes an annotation CSV, split lists and one small image file per clip
/// end frame under `root`. Adjacent clips always carry different labels.
pub fn generate(
    root: &Path,
    shapes: &[VideoShape],
    seed: u64,
) -> std::io::Result<SyntheticDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = FrameLayout::with_root(root.join("frames"));
    let mut csv = String::from("video_id,frame_index,action\n");
    let mut clip_labels = Vec::new();
    let (mut train, mut test) = (String::new(), String::new());
    for shape in shapes {
        let mut labels: Vec<ActionLabel> = Vec::with_capacity(shape.clips);
        let mut frame = 0u64;
        for _ in 0..shape.clips {
            let label = loop {
                let l = ActionLabel::ALL[rng.gen_range(0..ActionLabel::COUNT)];
                if labels.last() != Some(&l) {
                    break l;
                }
            };
            labels.push(label);
            let len = rng.gen_range(2..6u64);
            for f in frame..frame + len {
                writeln!(csv, "{},{},{}", shape.video_id, f, label.canonical_name()).unwrap();
            }
            frame += len;
            let end = layout.frame_ref(&shape.video_id, frame - 1);
            std::fs::create_dir_all(end.path.parent().expect("frame path has a parent"))?;
            std::fs::write(&end.path, format!("frame {} {}", shape.video_id, frame - 1))?;
        }
        clip_labels.push((shape.video_id.clone(), labels));
        let list = match shape.split {
            Split::Train => &mut train,
            Split::Test => &mut test,
        };
        list.push_str(&shape.video_id);
        list.push('\n');
    }
    let out = SyntheticDataset {
        annotations: root.join("annotations.csv"),
        train_list: root.join("train.txt"),
        test_list: root.join("test.txt"),
        layout,
        clip_labels,
    };
    std::fs::write(&out.annotations, csv)?;
    std::fs::write(&out.train_list, train)?;
    std::fs::write(&out.test_list, test)?;
    Ok(out)
}
