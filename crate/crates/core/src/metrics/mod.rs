//! Top-k next-action accuracy: sample level (SLAcc), video level (VLAcc) and
//! the relaxed variants that also accept the action after the next one.

mod oracle;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::ActionLabel;

pub use oracle::brute_force_oracle;
pub use report::{audit_lines, format_percent, render_table, AUDIT_HEADER, TABLE_FOOTER};

pub const MAX_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    pub step_index: usize,
    /// Ranked predictions, best first; one to three entries.
    pub ranked_labels: Vec<ActionLabel>,
    pub target_next: ActionLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookahead_next: Option<ActionLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    Standard,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Sample,
    Video,
}

/// Treatment of records without a lookahead action under the relaxed condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxedPolicy {
    /// Leave them out of relaxed numerators and denominators.
    #[default]
    ExcludeMissingLookahead,
    /// Score them against the next action alone.
    TargetOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no records to score")]
    EmptyRecordSet,
    #[error("k must be 1, 2 or 3, got {0}")]
    InvalidK(usize),
    #[error("record {video} step {step} has {len} ranked labels; expected 1 to 3")]
    BadRanking {
        video: String,
        step: usize,
        len: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelaxedTargets {
    Included(BTreeSet<ActionLabel>),
    Excluded,
}

/// Actions accepted under the relaxed condition: the next action and the one
/// after it.
pub fn relaxed_target_set(record: &PredictionRecord, policy: RelaxedPolicy) -> RelaxedTargets {
    match (record.lookahead_next, policy) {
        (Some(next), _) => RelaxedTargets::Included([record.target_next, next].into()),
        (None, RelaxedPolicy::TargetOnly) => RelaxedTargets::Included([record.target_next].into()),
        (None, RelaxedPolicy::ExcludeMissingLookahead) => RelaxedTargets::Excluded,
    }
}

fn check_k(k: usize) -> Result<(), MetricsError> {
    if (1..=MAX_K).contains(&k) {
        Ok(())
    } else {
        Err(MetricsError::InvalidK(k))
    }
}

fn check_records(records: &[PredictionRecord]) -> Result<(), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecordSet);
    }
    for r in records {
        if r.ranked_labels.is_empty() || r.ranked_labels.len() > MAX_K {
            return Err(MetricsError::BadRanking {
                video: r.video_id.clone(),
                step: r.step_index,
                len: r.ranked_labels.len(),
            });
        }
    }
    Ok(())
}

/// First rank (1-based) whose label is accepted, if any.
fn first_hit(ranked: &[ActionLabel], accepted: impl Fn(ActionLabel) -> bool) -> Option<usize> {
    ranked.iter().position(|&l| accepted(l)).map(|p| p + 1)
}

/// Hit counts at k = 1..=3 for one group of records.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub total: u64,
    pub hits: [u64; MAX_K],
}

impl Tally {
    fn add(&mut self, first_hit: Option<usize>) {
        self.total += 1;
        if let Some(rank) = first_hit {
            for k in rank..=MAX_K {
                self.hits[k - 1] += 1;
            }
        }
    }

    fn rate(&self, k: usize) -> Option<f64> {
        (self.total > 0).then(|| self.hits[k - 1] as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoBreakdown {
    pub video_id: String,
    pub standard: Tally,
    pub relaxed: Tally,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub video_id: String,
    pub step_index: usize,
    pub reason: String,
}

/// Per-record outcome used by the audit file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordOutcome {
    pub standard_first_hit: Option<usize>,
    /// `None` when the record is excluded from relaxed scoring.
    pub relaxed_first_hit: Option<Option<usize>>,
}

pub fn record_outcome(record: &PredictionRecord, policy: RelaxedPolicy) -> RecordOutcome {
    let standard_first_hit = first_hit(&record.ranked_labels, |l| l == record.target_next);
    let relaxed_first_hit = match relaxed_target_set(record, policy) {
        RelaxedTargets::Included(set) => {
            Some(first_hit(&record.ranked_labels, |l| set.contains(&l)))
        }
        RelaxedTargets::Excluded => None,
    };
    RecordOutcome {
        standard_first_hit,
        relaxed_first_hit,
    }
}

fn tally_by_video(
    records: &[PredictionRecord],
    policy: RelaxedPolicy,
) -> BTreeMap<&str, VideoBreakdown> {
    let mut videos: BTreeMap<&str, VideoBreakdown> = BTreeMap::new();
    for record in records {
        let entry = videos
            .entry(&record.video_id)
            .or_insert_with(|| VideoBreakdown {
                video_id: record.video_id.clone(),
                ..Default::default()
            });
        let outcome = record_outcome(record, policy);
        entry.standard.add(outcome.standard_first_hit);
        if let Some(hit) = outcome.relaxed_first_hit {
            entry.relaxed.add(hit);
        }
    }
    videos
}

fn pooled(videos: &BTreeMap<&str, VideoBreakdown>, condition: Condition) -> Tally {
    let mut sum = Tally::default();
    for v in videos.values() {
        let t = match condition {
            Condition::Standard => v.standard,
            Condition::Relaxed => v.relaxed,
        };
        sum.total += t.total;
        for k in 0..MAX_K {
            sum.hits[k] += t.hits[k];
        }
    }
    sum
}

/// Mean of per-video rates over videos with at least one scored record.
fn video_mean(
    videos: &BTreeMap<&str, VideoBreakdown>,
    condition: Condition,
    k: usize,
) -> Option<(f64, usize)> {
    let rates: Vec<f64> = videos
        .values()
        .filter_map(|v| match condition {
            Condition::Standard => v.standard.rate(k),
            Condition::Relaxed => v.relaxed.rate(k),
        })
        .collect();
    if rates.is_empty() {
        return None;
    }
    let n = rates.len();
    Some((rates.iter().sum::<f64>() / n as f64 * 100.0, n))
}

fn cell(
    records: &[PredictionRecord],
    condition: Condition,
    level: Level,
    k: usize,
    policy: RelaxedPolicy,
) -> Result<f64, MetricsError> {
    check_k(k)?;
    check_records(records)?;
    let videos = tally_by_video(records, policy);
    let value = match level {
        Level::Sample => pooled(&videos, condition).rate(k).map(|r| r * 100.0),
        Level::Video => video_mean(&videos, condition, k).map(|(v, _)| v),
    };
    value.ok_or(MetricsError::EmptyRecordSet)
}

/// Percentage of records whose next action is among the first `k` predictions.
pub fn slacc_topk(records: &[PredictionRecord], k: usize) -> Result<f64, MetricsError> {
    cell(
        records,
        Condition::Standard,
        Level::Sample,
        k,
        RelaxedPolicy::default(),
    )
}

/// Unweighted mean over videos of the per-video top-k accuracy.
pub fn vlacc_topk(records: &[PredictionRecord], k: usize) -> Result<f64, MetricsError> {
    cell(
        records,
        Condition::Standard,
        Level::Video,
        k,
        RelaxedPolicy::default(),
    )
}

/// Relaxed top-k accuracy at the given level.
pub fn reacc_topk(
    records: &[PredictionRecord],
    k: usize,
    level: Level,
    policy: RelaxedPolicy,
) -> Result<f64, MetricsError> {
    cell(records, Condition::Relaxed, level, k, policy)
}

/// All twelve headline cells plus denominators and breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: RelaxedPolicy,
    pub slacc: [f64; MAX_K],
    pub vlacc: [f64; MAX_K],
    /// `None` when every record is excluded from relaxed scoring.
    pub re_slacc: Option<[f64; MAX_K]>,
    pub re_vlacc: Option<[f64; MAX_K]>,
    pub n_samples: u64,
    pub n_videos: usize,
    pub n_relaxed_samples: u64,
    pub n_relaxed_videos: usize,
    pub per_video: Vec<VideoBreakdown>,
    pub excluded: Vec<Exclusion>,
}

impl MetricsReport {
    pub fn get(&self, condition: Condition, level: Level, k: usize) -> Option<f64> {
        let row = match (condition, level) {
            (Condition::Standard, Level::Sample) => Some(self.slacc),
            (Condition::Standard, Level::Video) => Some(self.vlacc),
            (Condition::Relaxed, Level::Sample) => self.re_slacc,
            (Condition::Relaxed, Level::Video) => self.re_vlacc,
        };
        row.map(|r| r[k - 1])
    }

    /// The twelve cells in table order.
    pub fn cells(&self) -> [Option<f64>; 12] {
        let mut out = [None; 12];
        let mut i = 0;
        for (condition, level) in [
            (Condition::Standard, Level::Sample),
            (Condition::Standard, Level::Video),
            (Condition::Relaxed, Level::Sample),
            (Condition::Relaxed, Level::Video),
        ] {
            for k in 1..=MAX_K {
                out[i] = self.get(condition, level, k);
                i += 1;
            }
        }
        out
    }
}

/// Scores `records`. `unscored` lists samples that produced no usable
/// prediction; they are reported as exclusions only.
pub fn evaluate(
    records: &[PredictionRecord],
    policy: RelaxedPolicy,
    unscored: &[Exclusion],
) -> Result<MetricsReport, MetricsError> {
    check_records(records)?;
    let videos = tally_by_video(records, policy);
    let standard = pooled(&videos, Condition::Standard);
    let relaxed = pooled(&videos, Condition::Relaxed);
    let row = |level: Level, condition: Condition| -> Option<[f64; MAX_K]> {
        let mut out = [0.0; MAX_K];
        for k in 1..=MAX_K {
            out[k - 1] = match level {
                Level::Sample => pooled(&videos, condition).rate(k)? * 100.0,
                Level::Video => video_mean(&videos, condition, k)?.0,
            };
        }
        Some(out)
    };
    let n_relaxed_videos = videos.values().filter(|v| v.relaxed.total > 0).count();
    for v in videos.values().filter(|v| v.relaxed.total == 0) {
        log::info!(
            "video {} has no relaxed-scorable records; dropped from relaxed VLAcc",
            v.video_id
        );
    }
    let mut excluded: Vec<Exclusion> = records
        .iter()
        .filter(|r| matches!(relaxed_target_set(r, policy), RelaxedTargets::Excluded))
        .map(|r| Exclusion {
            video_id: r.video_id.clone(),
            step_index: r.step_index,
            reason: "relaxed: no action after the next one".into(),
        })
        .collect();
    excluded.extend(unscored.iter().cloned());
    Ok(MetricsReport {
        policy,
        slacc: row(Level::Sample, Condition::Standard).expect("records non-empty"),
        vlacc: row(Level::Video, Condition::Standard).expect("records non-empty"),
        re_slacc: row(Level::Sample, Condition::Relaxed),
        re_vlacc: row(Level::Video, Condition::Relaxed),
        n_samples: standard.total,
        n_videos: videos.len(),
        n_relaxed_samples: relaxed.total,
        n_relaxed_videos,
        per_video: videos.into_values().collect(),
        excluded,
    })
}

#[cfg(test)]
mod tests;
