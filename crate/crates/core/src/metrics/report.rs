//! Tab-separated report and per-sample audit output.

use super::{record_outcome, MetricsReport, PredictionRecord, RelaxedPolicy};

/// Formats a percentage with two decimals, rounding halves away from zero.
///
/// The small nudge absorbs binary representation error so that values such as
/// 45.605 (from exact fractions) round up as they would by hand.
pub fn format_percent(value: f64) -> String {
    let hundredths = (value * 100.0 + 1e-9 + 0.5).floor();
    format!("{:.2}", hundredths / 100.0)
}

const COLUMNS: [&str; 12] = [
    "SLAcc@1",
    "SLAcc@2",
    "SLAcc@3",
    "VLAcc@1",
    "VLAcc@2",
    "VLAcc@3",
    "ReSLAcc@1",
    "ReSLAcc@2",
    "ReSLAcc@3",
    "ReVLAcc@1",
    "ReVLAcc@2",
    "ReVLAcc@3",
];

pub const TABLE_FOOTER: &str = "\
# Re* columns accept the next action or the action after it.
# Samples without an action after the next one are left out of Re* columns (see relaxed_samples).
# VLAcc is the unweighted mean of per-video accuracy.";

/// One header line plus one row per `(name, report)`, then footer comments.
pub fn render_table(rows: &[(String, &MetricsReport)]) -> String {
    let mut out = String::from("method\t");
    out.push_str(&COLUMNS.join("\t"));
    out.push_str("\tsamples\tvideos\trelaxed_samples\trelaxed_videos\texcluded\n");
    let mut policies = Vec::new();
    for (name, report) in rows {
        out.push_str(name);
        for cell in report.cells() {
            out.push('\t');
            match cell {
                Some(v) => out.push_str(&format_percent(v)),
                None => out.push_str("n/a"),
            }
        }
        out.push_str(&format!(
            "\t{}\t{}\t{}\t{}\t{}\n",
            report.n_samples,
            report.n_videos,
            report.n_relaxed_samples,
            report.n_relaxed_videos,
            report.excluded.len()
        ));
        if !policies.contains(&report.policy) {
            policies.push(report.policy);
        }
    }
    out.push_str(TABLE_FOOTER);
    out.push('\n');
    if policies.contains(&RelaxedPolicy::TargetOnly) {
        out.push_str("# Rows using the target-only policy score such samples against the next action alone.\n");
    }
    out
}

pub const AUDIT_HEADER: &str =
    "video_id\tstep_index\tranked\ttarget\tlookahead\tstd_rank\tstd@1\tstd@2\tstd@3\tre_rank\tre@1\tre@2\tre@3";

fn flags(first_hit: Option<usize>) -> String {
    (1..=3)
        .map(|k| {
            if first_hit.is_some_and(|r| r <= k) {
                "1"
            } else {
                "0"
            }
        })
        .collect::<Vec<_>>()
        .join("\t")
}

/// One line per record with hit/miss flags under both conditions.
pub fn audit_lines(records: &[PredictionRecord], policy: RelaxedPolicy) -> String {
    let mut out = String::from(AUDIT_HEADER);
    out.push('\n');
    for r in records {
        let outcome = record_outcome(r, policy);
        let ranked = r
            .ranked_labels
            .iter()
            .map(|l| l.identifier())
            .collect::<Vec<_>>()
            .join(",");
        let rank = |h: Option<usize>| h.map_or("-".to_string(), |r| r.to_string());
        let relaxed = match outcome.relaxed_first_hit {
            Some(hit) => format!("{}\t{}", rank(hit), flags(hit)),
            None => "excluded\t-\t-\t-".to_string(),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.video_id,
            r.step_index,
            ranked,
            r.target_next.identifier(),
            r.lookahead_next.map_or("-", |l| l.identifier()),
            rank(outcome.standard_first_hit),
            flags(outcome.standard_first_hit),
            relaxed
        ));
    }
    out
}
