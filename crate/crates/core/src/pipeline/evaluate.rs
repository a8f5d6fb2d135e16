use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_error, read_jsonl, PipelineError, RunManifest, AUDIT, METRICS_JSON, REPORT_TABLE};
use crate::fsutil::write_atomic;
use crate::metrics::{
    audit_lines, evaluate, render_table, Exclusion, MetricsReport, PredictionRecord, RelaxedPolicy,
};

pub struct EvaluateArgs {
    pub predictions: PathBuf,
    /// Samples that produced no prediction; listed as exclusions.
    pub failures: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub policy: RelaxedPolicy,
    /// Row label in the report table.
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NamedReport {
    name: String,
    report: MetricsReport,
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    write_atomic(path, text.as_bytes()).map_err(io_error(path))
}

/// Scores a predictions file. Writes `report.tsv`, `audit.tsv` and `metrics.json`.
pub fn cmd_evaluate(
    args: &EvaluateArgs,
    manifest: RunManifest,
) -> Result<MetricsReport, PipelineError> {
    let records: Vec<PredictionRecord> = read_jsonl(&args.predictions)?;
    let unscored: Vec<Exclusion> = match &args.failures {
        Some(p) if p.exists() => read_jsonl(p)?,
        _ => Vec::new(),
    };
    manifest
        .with_count("scored", records.len())
        .with_count("unscored", unscored.len())
        .write(&args.out_dir)?;
    let report = evaluate(&records, args.policy, &unscored)?;
    write_text(
        &args.out_dir.join(REPORT_TABLE),
        &render_table(&[(args.name.clone(), &report)]),
    )?;
    write_text(
        &args.out_dir.join(AUDIT),
        &audit_lines(&records, args.policy),
    )?;
    let named = NamedReport {
        name: args.name.clone(),
        report: report.clone(),
    };
    write_text(
        &args.out_dir.join(METRICS_JSON),
        &(serde_json::to_string_pretty(&named).expect("report serializes") + "\n"),
    )?;
    Ok(report)
}

/// Combines several `metrics.json` files into one table, one row each.
pub fn cmd_report(inputs: &[PathBuf], out: &Path) -> Result<String, PipelineError> {
    if inputs.is_empty() {
        return Err(PipelineError::Invalid(
            "report needs at least one metrics.json".into(),
        ));
    }
    let mut named = Vec::new();
    for path in inputs {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        let n: NamedReport = serde_json::from_str(&text).map_err(|e| PipelineError::Record {
            path: path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        named.push(n);
    }
    let rows: Vec<(String, &MetricsReport)> =
        named.iter().map(|n| (n.name.clone(), &n.report)).collect();
    let table = render_table(&rows);
    write_text(out, &table)?;
    Ok(table)
}
