//! Historical memory states: labels-only distant history plus a detailed
//! near-history observation (frame or caption) and the current action.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::PlanningSample;
use crate::domain::{ActionLabel, Caption, FrameRef};
use crate::gateway::{Attachment, Backend, BackendError, ChatRequest};
use crate::prompts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemoryVariant {
    /// Distant labels + near frame + current action.
    DirNhfm,
    /// Distant labels + caption of the near frame + current action.
    IndirNhfm,
    /// Near frame and current action only.
    AblationI,
    /// Caption of the near frame only.
    AblationIICaption,
    /// Near frame only.
    AblationIIFrame,
    /// Near frame paired with its action.
    AblationIII,
    /// Previous labels plus the frame/action pair; same content as `DirNhfm`.
    AblationIV,
}

impl MemoryVariant {
    pub const ALL: [MemoryVariant; 7] = [
        MemoryVariant::DirNhfm,
        MemoryVariant::IndirNhfm,
        MemoryVariant::AblationI,
        MemoryVariant::AblationIICaption,
        MemoryVariant::AblationIIFrame,
        MemoryVariant::AblationIII,
        MemoryVariant::AblationIV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MemoryVariant::DirNhfm => "dir-nhfm",
            MemoryVariant::IndirNhfm => "indir-nhfm",
            MemoryVariant::AblationI => "ablation-i",
            MemoryVariant::AblationIICaption => "ablation-ii-caption",
            MemoryVariant::AblationIIFrame => "ablation-ii-frame",
            MemoryVariant::AblationIII => "ablation-iii",
            MemoryVariant::AblationIV => "ablation-iv",
        }
    }

    pub fn uses_frame(self) -> bool {
        !self.uses_caption()
    }

    pub fn uses_caption(self) -> bool {
        matches!(
            self,
            MemoryVariant::IndirNhfm | MemoryVariant::AblationIICaption
        )
    }

    pub fn keeps_distant_history(self) -> bool {
        matches!(
            self,
            MemoryVariant::DirNhfm | MemoryVariant::IndirNhfm | MemoryVariant::AblationIV
        )
    }

    pub fn keeps_last_action(self) -> bool {
        !matches!(
            self,
            MemoryVariant::AblationIICaption | MemoryVariant::AblationIIFrame
        )
    }
}

impl fmt::Display for MemoryVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MemoryVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        MemoryVariant::ALL
            .into_iter()
            .find(|v| v.name() == lower || format!("{v:?}").to_ascii_lowercase() == lower)
            .ok_or_else(|| {
                let names: Vec<_> = MemoryVariant::ALL.iter().map(|v| v.name()).collect();
                format!(
                    "unknown memory variant {s:?}; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

/// Ablation settings (i)-(iv); setting (ii) comes in caption and frame modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationSetting {
    I,
    IICaption,
    IIFrame,
    III,
    IV,
}

impl AblationSetting {
    pub fn variant(self) -> MemoryVariant {
        match self {
            AblationSetting::I => MemoryVariant::AblationI,
            AblationSetting::IICaption => MemoryVariant::AblationIICaption,
            AblationSetting::IIFrame => MemoryVariant::AblationIIFrame,
            AblationSetting::III => MemoryVariant::AblationIII,
            AblationSetting::IV => MemoryVariant::AblationIV,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryState {
    pub variant: MemoryVariant,
    pub distant_history: Vec<ActionLabel>,
    pub near_frame: Option<FrameRef>,
    pub near_caption: Option<Caption>,
    pub last_action: Option<ActionLabel>,
}

impl MemoryState {
    /// Whether the fields match what the variant allows.
    pub fn is_consistent(&self) -> bool {
        let v = self.variant;
        (v.keeps_distant_history() || self.distant_history.is_empty())
            && self.near_frame.is_some() == v.uses_frame()
            && self.near_caption.is_some() == v.uses_caption()
            && self.last_action.is_some() == v.keeps_last_action()
    }

    /// Shifts the chain forward by one predicted action: the current action
    /// joins the distant history (trimmed to `window`) and `next` becomes the
    /// current action. The near observation is left unchanged.
    pub fn advance(&mut self, next: ActionLabel, window: usize) {
        if self.variant.keeps_distant_history() {
            if let Some(last) = self.last_action {
                self.distant_history.push(last);
            }
            let excess = self.distant_history.len().saturating_sub(window);
            self.distant_history.drain(..excess);
        }
        if self.variant.keeps_last_action() {
            self.last_action = Some(next);
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MemoryError {
    #[error("frame file {0} is missing or unreadable")]
    MissingFrameFile(String),
    #[error("captioner returned empty text for {0}")]
    EmptyCaption(String),
    #[error("ablation setting {0:?} needs a captioner")]
    CaptionerRequired(AblationSetting),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn require_frame(frame: &FrameRef) -> Result<(), MemoryError> {
    if frame.path.is_file() {
        Ok(())
    } else {
        Err(MemoryError::MissingFrameFile(
            frame.path.display().to_string(),
        ))
    }
}

/// Caption request for one frame: the description prompt plus the image.
pub fn caption_request(frame: &FrameRef) -> Result<ChatRequest, MemoryError> {
    let attachment = Attachment::load(&frame.path)
        .map_err(|_| MemoryError::MissingFrameFile(frame.path.display().to_string()))?;
    Ok(ChatRequest {
        template_version: prompts::TEMPLATE_VERSION.to_string(),
        system_text: prompts::render_dc_prompt().to_string(),
        user_text: prompts::CAPTION_USER_TEXT.to_string(),
        attachments: vec![attachment],
        followups: Vec::new(),
        context: None,
    })
}

pub fn caption_frame(frame: &FrameRef, captioner: &dyn Backend) -> Result<Caption, MemoryError> {
    let response = captioner.complete(&caption_request(frame)?)?;
    Caption::new(response.text, frame.clone(), response.backend_id)
        .map_err(|_| MemoryError::EmptyCaption(frame.path.display().to_string()))
}

pub fn build_dir_nhfm(sample: &PlanningSample) -> Result<MemoryState, MemoryError> {
    require_frame(&sample.near_frame)?;
    Ok(MemoryState {
        variant: MemoryVariant::DirNhfm,
        distant_history: sample.history_labels.clone(),
        near_frame: Some(sample.near_frame.clone()),
        near_caption: None,
        last_action: Some(sample.current_label),
    })
}

pub fn build_indir_nhfm(
    sample: &PlanningSample,
    captioner: &dyn Backend,
) -> Result<MemoryState, MemoryError> {
    Ok(MemoryState {
        variant: MemoryVariant::IndirNhfm,
        distant_history: sample.history_labels.clone(),
        near_frame: None,
        near_caption: Some(caption_frame(&sample.near_frame, captioner)?),
        last_action: Some(sample.current_label),
    })
}

pub fn build_ablation(
    sample: &PlanningSample,
    setting: AblationSetting,
    captioner: Option<&dyn Backend>,
) -> Result<MemoryState, MemoryError> {
    let frame_only = |variant, last_action| -> Result<MemoryState, MemoryError> {
        require_frame(&sample.near_frame)?;
        Ok(MemoryState {
            variant,
            distant_history: Vec::new(),
            near_frame: Some(sample.near_frame.clone()),
            near_caption: None,
            last_action,
        })
    };
    match setting {
        AblationSetting::I => frame_only(MemoryVariant::AblationI, Some(sample.current_label)),
        AblationSetting::III => frame_only(MemoryVariant::AblationIII, Some(sample.current_label)),
        AblationSetting::IIFrame => frame_only(MemoryVariant::AblationIIFrame, None),
        AblationSetting::IICaption => {
            let captioner = captioner.ok_or(MemoryError::CaptionerRequired(setting))?;
            Ok(MemoryState {
                variant: MemoryVariant::AblationIICaption,
                distant_history: Vec::new(),
                near_frame: None,
                near_caption: Some(caption_frame(&sample.near_frame, captioner)?),
                last_action: None,
            })
        }
        AblationSetting::IV => {
            let mut state = build_dir_nhfm(sample)?;
            state.variant = MemoryVariant::AblationIV;
            Ok(state)
        }
    }
}

/// Builds the memory state for any variant.
pub fn build_memory(
    sample: &PlanningSample,
    variant: MemoryVariant,
    captioner: Option<&dyn Backend>,
) -> Result<MemoryState, MemoryError> {
    match variant {
        MemoryVariant::DirNhfm => build_dir_nhfm(sample),
        MemoryVariant::IndirNhfm => {
            let captioner =
                captioner.ok_or(MemoryError::CaptionerRequired(AblationSetting::IICaption))?;
            build_indir_nhfm(sample, captioner)
        }
        MemoryVariant::AblationI => build_ablation(sample, AblationSetting::I, captioner),
        MemoryVariant::AblationIICaption => {
            build_ablation(sample, AblationSetting::IICaption, captioner)
        }
        MemoryVariant::AblationIIFrame => {
            build_ablation(sample, AblationSetting::IIFrame, captioner)
        }
        MemoryVariant::AblationIII => build_ablation(sample, AblationSetting::III, captioner),
        MemoryVariant::AblationIV => build_ablation(sample, AblationSetting::IV, captioner),
    }
}
