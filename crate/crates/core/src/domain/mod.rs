//! Action vocabulary and shared value types.

mod label;
mod synonyms;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use label::{ActionLabel, UnknownAction};
pub use synonyms::{normalize_action_label, normalize_phrase, SynonymTable, SynonymTableError};

/// Reference to one extracted video frame on disk.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub video_id: String,
    pub frame_index: u64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValueError {
    #[error("caption text is empty")]
    EmptyCaption,
    #[error("goal text is empty")]
    EmptyGoal,
    #[error("plan has {steps} steps but horizon is {horizon}")]
    PlanExceedsHorizon { steps: usize, horizon: usize },
    #[error("planning horizon must be positive")]
    ZeroHorizon,
}

/// A generated description of a frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    text: String,
    source_frame: FrameRef,
    generator_id: String,
}

impl Caption {
    pub fn new(
        text: impl Into<String>,
        source_frame: FrameRef,
        generator_id: impl Into<String>,
    ) -> Result<Self, ValueError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ValueError::EmptyCaption);
        }
        Ok(Caption {
            text,
            source_frame,
            generator_id: generator_id.into(),
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn source_frame(&self) -> &FrameRef {
        &self.source_frame
    }

    pub fn generator_id(&self) -> &str {
        &self.generator_id
    }
}

/// Natural-language planning goal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Goal(String);

impl Goal {
    pub const DEFAULT_TEXT: &'static str =
        "Provide analysis and the next action for laparoscopic cholecystectomy.";

    pub fn new(text: impl Into<String>) -> Result<Self, ValueError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ValueError::EmptyGoal);
        }
        Ok(Goal(text))
    }

    pub fn text(&self) -> &str {
        &self.0
    }
}

impl Default for Goal {
    fn default() -> Self {
        Goal(Self::DEFAULT_TEXT.to_string())
    }
}

impl TryFrom<String> for Goal {
    type Error = ValueError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Goal::new(value)
    }
}

impl From<Goal> for String {
    fn from(goal: Goal) -> String {
        goal.0
    }
}

/// Ordered plan of at most `horizon` actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionPlan {
    steps: Vec<ActionLabel>,
    horizon: usize,
}

impl ActionPlan {
    pub fn new(horizon: usize) -> Result<Self, ValueError> {
        if horizon == 0 {
            return Err(ValueError::ZeroHorizon);
        }
        Ok(ActionPlan {
            steps: Vec::with_capacity(horizon),
            horizon,
        })
    }

    pub fn push(&mut self, label: ActionLabel) -> Result<(), ValueError> {
        if self.steps.len() >= self.horizon {
            return Err(ValueError::PlanExceedsHorizon {
                steps: self.steps.len() + 1,
                horizon: self.horizon,
            });
        }
        self.steps.push(label);
        Ok(())
    }

    pub fn steps(&self) -> &[ActionLabel] {
        &self.steps
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_complete(&self) -> bool {
        self.steps.len() == self.horizon
    }
}
