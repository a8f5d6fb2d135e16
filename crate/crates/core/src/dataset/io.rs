use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use super::samples::{PlanningSample, SplitManifest};
use super::{DatasetError, FrameAnnotation};
use crate::domain::SynonymTable;
use crate::fsutil;

#[derive(Debug, Deserialize)]
struct AnnotationRow {
    video_id: String,
    frame_index: String,
    action: String,
}

/// One row of the segment manifest (`video_id,start_frame,end_frame,note`).
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SegmentSpec {
    pub video_id: String,
    pub start_frame: u64,
    pub end_frame: u64,
    #[serde(default)]
    pub note: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_line(err: &csv::Error) -> u64 {
    err.position().map(|p| p.line()).unwrap_or(0)
}

/// Parses annotation CSVs (`video_id,frame_index,action`), each given as a
/// `(name, reader)` pair. Output is sorted by `(video_id, frame_index)`.
pub fn ingest_annotations<R: Read>(
    sources: Vec<(String, R)>,
    synonyms: &SynonymTable,
) -> Result<Vec<FrameAnnotation>, DatasetError> {
    let mut out = Vec::new();
    for (name, reader) in sources {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| DatasetError::MalformedRow {
            file: name.clone(),
            line: 1,
            reason: e.to_string(),
        })?;
        if headers.iter().collect::<Vec<_>>() != ["video_id", "frame_index", "action"] {
            return Err(DatasetError::MalformedRow {
                file: name,
                line: 1,
                reason: "expected header `video_id,frame_index,action`".into(),
            });
        }
        let headers = headers.clone();
        for record in rdr.records() {
            let record = record.map_err(|e| DatasetError::MalformedRow {
                file: name.clone(),
                line: csv_line(&e),
                reason: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let row: AnnotationRow =
                record
                    .deserialize(Some(&headers))
                    .map_err(|e| DatasetError::MalformedRow {
                        file: name.clone(),
                        line,
                        reason: e.to_string(),
                    })?;
            let frame_index: u64 =
                row.frame_index
                    .parse()
                    .map_err(|_| DatasetError::MalformedRow {
                        file: name.clone(),
                        line,
                        reason: format!(
                            "frame_index {:?} is not a non-negative integer",
                            row.frame_index
                        ),
                    })?;
            if row.video_id.is_empty() {
                return Err(DatasetError::MalformedRow {
                    file: name.clone(),
                    line,
                    reason: "empty video_id".into(),
                });
            }
            let label = synonyms
                .lookup(&row.action)
                .map_err(|_| DatasetError::UnknownAction {
                    file: name.clone(),
                    line,
                    raw: row.action.clone(),
                })?;
            out.push(FrameAnnotation {
                video_id: row.video_id,
                frame_index,
                label,
            });
        }
    }
    out.sort_by(|a, b| {
        a.video_id
            .cmp(&b.video_id)
            .then(a.frame_index.cmp(&b.frame_index))
    });
    if let Some(dup) = out
        .windows(2)
        .find(|w| w[0].video_id == w[1].video_id && w[0].frame_index == w[1].frame_index)
    {
        return Err(DatasetError::DuplicateFrame {
            video: dup[0].video_id.clone(),
            frame: dup[0].frame_index,
        });
    }
    Ok(out)
}

pub fn ingest_annotation_files(
    paths: &[impl AsRef<Path>],
    synonyms: &SynonymTable,
) -> Result<Vec<FrameAnnotation>, DatasetError> {
    let mut sources = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(io_err(path))?;
        sources.push((path.display().to_string(), file));
    }
    ingest_annotations(sources, synonyms)
}

pub fn read_segment_manifest(path: &Path) -> Result<Vec<SegmentSpec>, DatasetError> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DatasetError::MalformedRow {
            file: name.clone(),
            line: 0,
            reason: e.to_string(),
        })?;
    let mut specs = Vec::new();
    for row in rdr.deserialize::<SegmentSpec>() {
        let spec = row.map_err(|e| DatasetError::MalformedRow {
            file: name.clone(),
            line: csv_line(&e),
            reason: e.to_string(),
        })?;
        if spec.start_frame > spec.end_frame {
            return Err(DatasetError::MalformedRow {
                file: name.clone(),
                line: specs.len() as u64 + 2,
                reason: "start_frame is after end_frame".into(),
            });
        }
        specs.push(spec);
    }
    Ok(specs)
}

fn read_video_list(path: &Path) -> Result<Vec<String>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

/// Reads the two plain-text split lists, one video id per line.
pub fn read_split_manifest(train: &Path, test: &Path) -> Result<SplitManifest, DatasetError> {
    Ok(SplitManifest {
        train: read_video_list(train)?,
        test: read_video_list(test)?,
    })
}

/// Writes samples as JSON lines, one record per line, fields in declaration order.
pub fn write_samples(path: &Path, samples: &[PlanningSample]) -> Result<(), DatasetError> {
    let mut buf = String::new();
    for sample in samples {
        buf.push_str(&serde_json::to_string(sample).expect("samples serialize"));
        buf.push('\n');
    }
    fsutil::write_atomic(path, buf.as_bytes()).map_err(io_err(path))
}

pub fn read_samples(path: &Path) -> Result<Vec<PlanningSample>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| DatasetError::SampleRecord {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ActionLabel;

    fn ingest(text: &str) -> Result<Vec<FrameAnnotation>, DatasetError> {
        ingest_annotations(
            vec![("a.csv".to_string(), text.as_bytes())],
            SynonymTable::builtin(),
        )
    }

    #[test]
    fn two_rows() {
        let rows = ingest("video_id,frame_index,action\nVID01,0,Dissection\nVID01,1,Dissection\n")
            .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.label == ActionLabel::Dissection));
    }

    #[test]
    fn unknown_action() {
        let err = ingest("video_id,frame_index,action\nVID01,0,Irrigation\n").unwrap_err();
        assert!(
            matches!(err, DatasetError::UnknownAction { line: 2, ref raw, .. } if raw == "Irrigation")
        );
    }

    #[test]
    fn shuffled_rows_sorted() {
        let mut rows: Vec<(String, u64)> = (0..40u64)
            .flat_map(|f| [("VID02".to_string(), f), ("VID01".to_string(), f)])
            .collect();
        // Deterministic shuffle.
        rows.sort_by_key(|(v, f)| (f * 7919 + v.len() as u64 * 31) % 97);
        let mut text = String::from("video_id,frame_index,action\n");
        for (v, f) in &rows {
            text.push_str(&format!("{v},{f},Coagulation\n"));
        }
        let got: Vec<(String, u64)> = ingest(&text)
            .unwrap()
            .into_iter()
            .map(|a| (a.video_id, a.frame_index))
            .collect();
        let mut expected = rows.clone();
        expected.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn duplicate_and_malformed() {
        let err =
            ingest("video_id,frame_index,action\nV,3,Dissection\nV,3,Coagulation\n").unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateFrame { frame: 3, .. }));
        let err = ingest("video_id,frame_index,action\nV,-1,Dissection\n").unwrap_err();
        assert!(matches!(err, DatasetError::MalformedRow { line: 2, .. }));
        let err = ingest("video_id,frame_index,action\nV,1\n").unwrap_err();
        assert!(matches!(err, DatasetError::MalformedRow { .. }));
        let err = ingest("video,frame,label\nV,1,Dissection\n").unwrap_err();
        assert!(matches!(err, DatasetError::MalformedRow { line: 1, .. }));
    }

    #[test]
    fn duplicates_across_files() {
        let a = "video_id,frame_index,action\nV,1,Dissection\n";
        let err = ingest_annotations(
            vec![
                ("a".to_string(), a.as_bytes()),
                ("b".to_string(), a.as_bytes()),
            ],
            SynonymTable::builtin(),
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateFrame { .. }));
    }
}
