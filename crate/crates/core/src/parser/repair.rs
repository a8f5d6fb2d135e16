use super::{parse_plan_with, ParseError, PlanResponse};
use crate::domain::SynonymTable;
use crate::gateway::{Backend, BackendError, PlanContext, Role, Turn};
use crate::prompts::PromptBundle;

/// Follow-up sent after a response that failed to parse.
pub const REPAIR_INSTRUCTION: &str = "Reformat your previous answer into the three required sections: \"## Progress Assessment\", \"## Safety Considerations\" and \"## Ready-to-Execute Actions\". Under the last heading list exactly three actions as \"1. **<action>**: <rationale>\", using only these action names: Aspiration, Coagulation, Dissection, Tissue Retraction, Vessel Clipping.";

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub plan: PlanResponse,
    pub repair_count: u32,
    pub repaired_text: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RepairError {
    #[error("response already parses; repair is only for failed parses")]
    NotNeeded,
    #[error("unrepairable response: first parse failed with `{first}`, repaired parse failed with `{second}`")]
    Unrepairable {
        first: ParseError,
        second: ParseError,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("loading prompt attachments: {0}")]
    Attachment(String),
}

/// Asks the backend once to reformat `raw` and parses the answer.
pub fn repair_and_reparse(
    raw: &str,
    backend: &dyn Backend,
    original: &PromptBundle,
    context: Option<PlanContext>,
    synonyms: &SynonymTable,
) -> Result<RepairOutcome, RepairError> {
    let first = match parse_plan_with(raw, synonyms) {
        Ok(_) => return Err(RepairError::NotNeeded),
        Err(e) => e,
    };
    let mut request = original
        .to_request(context)
        .map_err(|e| RepairError::Attachment(e.to_string()))?;
    request.followups = vec![
        Turn {
            role: Role::Assistant,
            content: raw.to_string(),
        },
        Turn {
            role: Role::User,
            content: REPAIR_INSTRUCTION.to_string(),
        },
    ];
    let response = backend.complete(&request)?;
    match parse_plan_with(&response.text, synonyms) {
        Ok(plan) => Ok(RepairOutcome {
            plan,
            repair_count: 1,
            repaired_text: response.text,
        }),
        Err(second) => Err(RepairError::Unrepairable { first, second }),
    }
}
