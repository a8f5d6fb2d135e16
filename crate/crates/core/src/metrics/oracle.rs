//! Direct per-sample enumeration of every metric cell.
//!
//! Shares no code with the engine; used to cross-check it.

use super::{Condition, Level, PredictionRecord};
use crate::domain::ActionLabel;

fn targets(record: &PredictionRecord, condition: Condition) -> Option<Vec<ActionLabel>> {
    match condition {
        Condition::Standard => Some(vec![record.target_next]),
        Condition::Relaxed => record
            .lookahead_next
            .map(|next| vec![record.target_next, next]),
    }
}

fn success(record: &PredictionRecord, wanted: &[ActionLabel], k: usize) -> bool {
    let mut i = 0;
    while i < k && i < record.ranked_labels.len() {
        if wanted.contains(&record.ranked_labels[i]) {
            return true;
        }
        i += 1;
    }
    false
}

fn rate(records: &[&PredictionRecord], condition: Condition, k: usize) -> Option<f64> {
    let mut total = 0u64;
    let mut hits = 0u64;
    for r in records {
        if let Some(wanted) = targets(r, condition) {
            total += 1;
            if success(r, &wanted, k) {
                hits += 1;
            }
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Percentage for one cell, or `None` when no record qualifies. Relaxed
/// cells skip records without a lookahead action.
pub fn brute_force_oracle(
    records: &[PredictionRecord],
    condition: Condition,
    level: Level,
    k: usize,
) -> Option<f64> {
    let all: Vec<&PredictionRecord> = records.iter().collect();
    match level {
        Level::Sample => rate(&all, condition, k).map(|r| r * 100.0),
        Level::Video => {
            let mut videos: Vec<&str> = Vec::new();
            for r in records {
                if !videos.contains(&r.video_id.as_str()) {
                    videos.push(&r.video_id);
                }
            }
            videos.sort();
            let mut sum = 0.0;
            let mut count = 0usize;
            for v in videos {
                let mine: Vec<&PredictionRecord> =
                    records.iter().filter(|r| r.video_id == v).collect();
                if let Some(r) = rate(&mine, condition, k) {
                    sum += r;
                    count += 1;
                }
            }
            (count > 0).then(|| sum / count as f64 * 100.0)
        }
    }
}
