//! Structured plan responses: progress assessment, safety considerations and
//! three ranked actions with rationales.
//!
//! The accepted grammar is documented in `docs/plan-grammar.md`.

pub mod fixtures;
mod grammar;
mod repair;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::ActionLabel;

pub use grammar::{parse_plan, parse_plan_with};
pub use repair::{repair_and_reparse, RepairError, RepairOutcome, REPAIR_INSTRUCTION};

pub const PLAN_RECORD_SCHEMA: &str = "plan-response/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Section {
    ProgressAssessment,
    SafetyConsiderations,
    ReadyToExecuteActions,
}

impl Section {
    pub const ALL: [Section; 3] = [
        Section::ProgressAssessment,
        Section::SafetyConsiderations,
        Section::ReadyToExecuteActions,
    ];

    pub fn heading(self) -> &'static str {
        match self {
            Section::ProgressAssessment => "Progress Assessment",
            Section::SafetyConsiderations => "Safety Considerations",
            Section::ReadyToExecuteActions => "Ready-to-Execute Actions",
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.heading())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedAction {
    pub label: ActionLabel,
    pub rationale: String,
    /// Action phrase exactly as it appeared in the response.
    pub raw_phrase: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub progress_assessment: String,
    pub safety_considerations: String,
    pub ranked_actions: [RankedAction; 3],
}

impl PlanResponse {
    pub fn ranked_labels(&self) -> [ActionLabel; 3] {
        [
            self.ranked_actions[0].label,
            self.ranked_actions[1].label,
            self.ranked_actions[2].label,
        ]
    }

    pub fn top(&self) -> ActionLabel {
        self.ranked_actions[0].label
    }
}

/// Parse failures. Offsets are byte offsets into the raw response.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("response is empty")]
    EmptyInput,
    #[error("missing section {section:?} (searched to byte {offset})")]
    MissingSection { section: Section, offset: usize },
    #[error("section {section:?} appears more than once (second at byte {offset})")]
    DuplicateSection { section: Section, offset: usize },
    #[error("expected 3 ranked actions, found {found} (section at byte {offset})")]
    TooFewActions { found: usize, offset: usize },
    #[error("unknown action {phrase:?} at byte {offset}")]
    UnknownAction { phrase: String, offset: usize },
}

/// Renders a response in the canonical layout accepted by [`parse_plan`].
///
/// Multi-line rationales put continuation lines on indented lines.
pub fn render_fixture(plan: &PlanResponse) -> String {
    let mut out = String::new();
    out.push_str("## Progress Assessment\n");
    out.push_str(&plan.progress_assessment);
    out.push_str("\n\n## Safety Considerations\n");
    out.push_str(&plan.safety_considerations);
    out.push_str("\n\n## Ready-to-Execute Actions\n");
    for (rank, action) in plan.ranked_actions.iter().enumerate() {
        let mut lines = action.rationale.lines();
        out.push_str(&format!(
            "{}. **{}**: {}\n",
            rank + 1,
            action.raw_phrase,
            lines.next().unwrap_or("")
        ));
        for line in lines {
            out.push_str("   ");
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests;
