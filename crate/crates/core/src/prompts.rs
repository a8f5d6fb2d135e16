//! Deterministic prompt rendering: the frame-description prompt and the
//! action-planning prompt built from a memory state, a goal and the surgical
//! knowledge base.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::domain::{ActionLabel, FrameRef, Goal, SynonymTable};
use crate::fsutil::sha256_hex;
use crate::gateway::{Attachment, ChatRequest, PlanContext};
use crate::memory::MemoryState;

/// Version of the embedded templates; recorded in cache keys and manifests.
pub const TEMPLATE_VERSION: &str = "sap-prompts/1";

const DC_PROMPT: &str = "You are a professional surgical analysis assistant specializing in laparoscopic cholecystectomy. Your task is to generate detailed descriptions of the video frame provided, focusing on anatomical structures, tool manipulation, key surgical steps, and environmental features.";

/// User message sent with the frame when requesting a caption.
pub const CAPTION_USER_TEXT: &str = "Describe the attached video frame.";

const PLANNER_SYSTEM_TEXT: &str = "You are a professional surgical planning assistant specializing in laparoscopic cholecystectomy.";

const DEFAULT_KB: &str = include_str!("../data/knowledge_base.txt");

/// The frame-description prompt.
pub fn render_dc_prompt() -> &'static str {
    DC_PROMPT
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("knowledge base is missing: {0}")]
    IncompleteKnowledgeBase(String),
    #[error("knowledge base line {line}: {reason}")]
    MalformedKnowledgeBase { line: usize, reason: String },
    #[error("reading knowledge base: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub surgical_process: String,
    pub safety_protocol: String,
    pub action_descriptions: BTreeMap<ActionLabel, String>,
}

impl KnowledgeBase {
    /// Parses the sectioned text format with `[process]`, `[safety]` and
    /// `[action:<Label>]` headers.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        enum Target {
            None,
            Process,
            Safety,
            Action(ActionLabel),
        }
        let mut process = Vec::new();
        let mut safety = Vec::new();
        let mut actions: BTreeMap<ActionLabel, Vec<&str>> = BTreeMap::new();
        let mut target = Target::None;
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.starts_with('#') {
                continue;
            }
            if let Some(header) = trimmed.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
                target = match header.trim() {
                    "process" => Target::Process,
                    "safety" => Target::Safety,
                    other => match other.strip_prefix("action:") {
                        Some(label) => {
                            let label = SynonymTable::builtin().lookup(label).map_err(|_| {
                                PromptError::MalformedKnowledgeBase {
                                    line: i + 1,
                                    reason: format!("unknown action {label:?}"),
                                }
                            })?;
                            if actions.insert(label, Vec::new()).is_some() {
                                return Err(PromptError::MalformedKnowledgeBase {
                                    line: i + 1,
                                    reason: format!("duplicate section for {label}"),
                                });
                            }
                            Target::Action(label)
                        }
                        None => {
                            return Err(PromptError::MalformedKnowledgeBase {
                                line: i + 1,
                                reason: format!("unknown section [{other}]"),
                            })
                        }
                    },
                };
                continue;
            }
            match target {
                Target::None if trimmed.is_empty() => {}
                Target::None => {
                    return Err(PromptError::MalformedKnowledgeBase {
                        line: i + 1,
                        reason: "text before the first section header".into(),
                    })
                }
                Target::Process => process.push(line),
                Target::Safety => safety.push(line),
                Target::Action(label) => actions.entry(label).or_default().push(line),
            }
        }
        let join = |lines: &[&str]| lines.join("\n").trim().to_string();
        let kb = KnowledgeBase {
            surgical_process: join(&process),
            safety_protocol: join(&safety),
            action_descriptions: actions.iter().map(|(l, lines)| (*l, join(lines))).collect(),
        };
        kb.check()?;
        Ok(kb)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The knowledge base shipped with the crate.
    pub fn builtin() -> &'static KnowledgeBase {
        static KB: OnceLock<KnowledgeBase> = OnceLock::new();
        KB.get_or_init(|| {
            KnowledgeBase::parse(DEFAULT_KB).expect("bundled knowledge base is valid")
        })
    }

    pub fn builtin_text() -> &'static str {
        DEFAULT_KB
    }

    pub fn check(&self) -> Result<(), PromptError> {
        if self.surgical_process.trim().is_empty() {
            return Err(PromptError::IncompleteKnowledgeBase(
                "surgical process".into(),
            ));
        }
        if self.safety_protocol.trim().is_empty() {
            return Err(PromptError::IncompleteKnowledgeBase(
                "safety protocol".into(),
            ));
        }
        for label in ActionLabel::ALL {
            if self
                .action_descriptions
                .get(&label)
                .is_none_or(|d| d.trim().is_empty())
            {
                return Err(PromptError::IncompleteKnowledgeBase(format!(
                    "description of {label}"
                )));
            }
        }
        Ok(())
    }

    /// Digest of the rendered content, recorded in run manifests.
    pub fn digest(&self) -> String {
        sha256_hex(render_knowledge_base(self).as_bytes())
    }
}

/// Fully rendered planner prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub image_attachments: Vec<FrameRef>,
    pub template_version: String,
}

impl PromptBundle {
    /// Chat request carrying this bundle, with attachment bytes loaded from disk.
    pub fn to_request(&self, context: Option<PlanContext>) -> std::io::Result<ChatRequest> {
        let attachments = self
            .image_attachments
            .iter()
            .map(|f| Attachment::load(&f.path))
            .collect::<std::io::Result<Vec<_>>>()?;
        Ok(ChatRequest {
            template_version: self.template_version.clone(),
            system_text: self.system_text.clone(),
            user_text: self.user_text.clone(),
            attachments,
            followups: Vec::new(),
            context,
        })
    }
}

fn render_knowledge_base(kb: &KnowledgeBase) -> String {
    let mut out = String::from("Surgical Domain Knowledge Base\n\nSurgical process:\n");
    out.push_str(&kb.surgical_process);
    out.push_str("\n\nSafety protocol:\n");
    out.push_str(&kb.safety_protocol);
    out.push_str("\n\nAction descriptions:\n");
    for label in ActionLabel::ALL {
        out.push_str(&format!("- {label}: {}\n", kb.action_descriptions[&label]));
    }
    out
}

fn label_list(labels: &[ActionLabel]) -> String {
    if labels.is_empty() {
        "none".to_string()
    } else {
        labels
            .iter()
            .map(|l| l.canonical_name())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Renders prompts under a fixed template version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptFactory {
    template_version: String,
}

impl Default for PromptFactory {
    fn default() -> Self {
        PromptFactory {
            template_version: TEMPLATE_VERSION.to_string(),
        }
    }
}

impl PromptFactory {
    pub fn new(template_version: impl Into<String>) -> Self {
        PromptFactory {
            template_version: template_version.into(),
        }
    }

    pub fn template_version(&self) -> &str {
        &self.template_version
    }

    /// Frame-description prompt as a bundle carrying `frame`.
    pub fn dc_bundle(&self, frame: &FrameRef) -> PromptBundle {
        PromptBundle {
            system_text: DC_PROMPT.to_string(),
            user_text: CAPTION_USER_TEXT.to_string(),
            image_attachments: vec![frame.clone()],
            template_version: self.template_version.clone(),
        }
    }

    pub fn ap_prompt(
        &self,
        memory: &MemoryState,
        goal: &Goal,
        kb: &KnowledgeBase,
    ) -> Result<PromptBundle, PromptError> {
        kb.check()?;
        let variant = memory.variant;
        let mut user = render_knowledge_base(kb);
        user.push('\n');

        let mut inputs = vec!["Surgical Domain Knowledge Base"];
        let mut attachments = Vec::new();
        if let Some(caption) = &memory.near_caption {
            inputs.push("Descriptions of near frames and the current state");
            user.push_str("Descriptions of near frames and the current state:\n");
            user.push_str(caption.text());
            user.push_str("\n\n");
        }
        if let Some(frame) = &memory.near_frame {
            inputs.push("Video frames provided");
            user.push_str("Video frames provided:\n");
            user.push_str(&format!(
                "[Image 1] video {}, frame {}\n\n",
                frame.video_id, frame.frame_index
            ));
            attachments.push(frame.clone());
        }
        if variant.keeps_distant_history() {
            inputs.push("Previous actions");
            user.push_str(&format!(
                "Previous actions: {}\n",
                label_list(&memory.distant_history)
            ));
        }
        if let Some(last) = memory.last_action {
            inputs.push("Last action");
            user.push_str(&format!("Last action: {last}\n"));
        }
        user.push('\n');
        user.push_str(&format!(
            "Based on the provided {}, you need to provide the following: progress assessment, safety considerations, ready-to-execute actions: Provide three actions. For each action, provide a rationale explaining why it is ranked in that order.\n\n",
            inputs.join(", ")
        ));
        user.push_str("Format the answer with exactly these three headings:\n## Progress Assessment\n## Safety Considerations\n## Ready-to-Execute Actions\n");
        user.push_str(&format!(
            "Under the last heading write a numbered list of three items in the form \"1. **<action>**: <rationale>\", ranked from most to least likely next action. Choose every action from: {}.\n\n",
            label_list(&ActionLabel::ALL)
        ));
        user.push_str(&format!("Goal: {}\n", goal.text()));

        Ok(PromptBundle {
            system_text: PLANNER_SYSTEM_TEXT.to_string(),
            user_text: user,
            image_attachments: attachments,
            template_version: self.template_version.clone(),
        })
    }
}

/// Action-planning prompt under the default template version.
pub fn render_ap_prompt(
    memory: &MemoryState,
    goal: &Goal,
    kb: &KnowledgeBase,
) -> Result<PromptBundle, PromptError> {
    PromptFactory::default().ap_prompt(memory, goal, kb)
}

/// Bundle text for logs with attachment paths replaced by content hashes.
pub fn render_sections_for_report(bundle: &PromptBundle) -> String {
    let mut out = format!(
        "template_version: {}\n--- system ---\n{}\n--- user ---\n{}\n--- attachments ---\n",
        bundle.template_version, bundle.system_text, bundle.user_text
    );
    for (i, frame) in bundle.image_attachments.iter().enumerate() {
        let hash = match std::fs::read(&frame.path) {
            Ok(bytes) => format!("sha256:{}", sha256_hex(&bytes)),
            Err(_) => "sha256:unavailable".to_string(),
        };
        out.push_str(&format!(
            "[{}] {hash} (video {}, frame {})\n",
            i + 1,
            frame.video_id,
            frame.frame_index
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ActionLabel::*;
    use crate::domain::Caption;
    use crate::memory::MemoryVariant;

    fn frame(path: &Path) -> FrameRef {
        FrameRef {
            video_id: "VID01".into(),
            frame_index: 9,
            path: path.to_path_buf(),
        }
    }

    fn dir_state(path: &Path, history: Vec<ActionLabel>) -> MemoryState {
        MemoryState {
            variant: MemoryVariant::DirNhfm,
            distant_history: history,
            near_frame: Some(frame(path)),
            near_caption: None,
            last_action: Some(VesselClipping),
        }
    }

    fn indir_state(caption: &str) -> MemoryState {
        MemoryState {
            variant: MemoryVariant::IndirNhfm,
            distant_history: vec![Dissection],
            near_frame: None,
            near_caption: Some(Caption::new(caption, frame(Path::new("f.png")), "m").unwrap()),
            last_action: Some(TissueRetraction),
        }
    }

    #[test]
    fn dc_prompt_text() {
        let text = render_dc_prompt();
        assert!(text.contains("laparoscopic cholecystectomy"));
        assert!(text.starts_with("You are a professional surgical analysis assistant"));
        assert!(text.contains(
            "anatomical structures, tool manipulation, key surgical steps, and environmental features"
        ));
        assert_eq!(render_dc_prompt(), render_dc_prompt());
    }

    #[test]
    fn template_version_bump() {
        let f = frame(Path::new("a.png"));
        let a = PromptFactory::default().dc_bundle(&f);
        let b = PromptFactory::new("sap-prompts/2").dc_bundle(&f);
        assert_ne!(a.template_version, b.template_version);
        assert_eq!(a.system_text, b.system_text);
        assert_eq!(a.user_text, b.user_text);
    }

    #[test]
    fn indir_has_caption_no_attachments() {
        let bundle = render_ap_prompt(
            &indir_state("X marks the duct"),
            &Goal::default(),
            KnowledgeBase::builtin(),
        )
        .unwrap();
        assert!(bundle.user_text.contains("X marks the duct"));
        assert!(bundle
            .user_text
            .contains("Descriptions of near frames and the current state"));
        assert!(bundle.image_attachments.is_empty());
    }

    #[test]
    fn dir_has_one_attachment() {
        let bundle = render_ap_prompt(
            &dir_state(Path::new("f.png"), vec![Dissection]),
            &Goal::default(),
            KnowledgeBase::builtin(),
        )
        .unwrap();
        assert_eq!(bundle.image_attachments.len(), 1);
        assert!(bundle.user_text.contains("Video frames provided"));
        assert!(bundle.user_text.contains("Previous actions: Dissection\n"));
        assert!(bundle.user_text.contains("Last action: Vessel Clipping\n"));
    }

    #[test]
    fn section_order() {
        let bundle = render_ap_prompt(
            &indir_state("cap"),
            &Goal::default(),
            KnowledgeBase::builtin(),
        )
        .unwrap();
        let text = &bundle.user_text;
        let order = [
            "Surgical Domain Knowledge Base",
            "Descriptions of near frames and the current state:",
            "Previous actions:",
            "Last action:",
            "progress assessment, safety considerations, ready-to-execute actions: Provide three actions.",
            "For each action, provide a rationale explaining why it is ranked in that order",
            "Goal: Provide analysis and the next action for laparoscopic cholecystectomy.",
        ];
        let positions: Vec<usize> = order
            .iter()
            .map(|s| text.find(s).unwrap_or_else(|| panic!("{s}")))
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{positions:?}");
    }

    // Frozen golden rendering of the memory block with empty distant history.
    #[test]
    fn empty_history_golden() {
        let bundle = render_ap_prompt(
            &dir_state(Path::new("f.png"), vec![]),
            &Goal::default(),
            KnowledgeBase::builtin(),
        )
        .unwrap();
        let start = bundle.user_text.find("Video frames provided:").unwrap();
        let end = bundle.user_text.find("Based on the provided").unwrap();
        assert_eq!(
            &bundle.user_text[start..end],
            "Video frames provided:\n[Image 1] video VID01, frame 9\n\nPrevious actions: none\nLast action: Vessel Clipping\n\n"
        );
        assert!(bundle.user_text.contains(
            "Based on the provided Surgical Domain Knowledge Base, Video frames provided, Previous actions, Last action, you need to provide the following"
        ));
    }

    #[test]
    fn headings_exactly_once_for_every_variant() {
        let cap = Caption::new("c", frame(Path::new("f.png")), "m").unwrap();
        for variant in MemoryVariant::ALL {
            let state = MemoryState {
                variant,
                distant_history: if variant.keeps_distant_history() {
                    vec![Dissection]
                } else {
                    vec![]
                },
                near_frame: variant.uses_frame().then(|| frame(Path::new("f.png"))),
                near_caption: variant.uses_caption().then(|| cap.clone()),
                last_action: variant.keeps_last_action().then_some(Coagulation),
            };
            assert!(state.is_consistent());
            let bundle =
                render_ap_prompt(&state, &Goal::default(), KnowledgeBase::builtin()).unwrap();
            for heading in [
                "## Progress Assessment",
                "## Safety Considerations",
                "## Ready-to-Execute Actions",
            ] {
                assert_eq!(
                    bundle.user_text.matches(heading).count(),
                    1,
                    "{variant} {heading}"
                );
            }
            assert_eq!(
                bundle.image_attachments.len(),
                usize::from(variant.uses_frame()),
                "{variant}"
            );
            assert_eq!(
                bundle.user_text.contains("Previous actions:"),
                variant.keeps_distant_history()
            );
            assert_eq!(
                bundle.user_text.contains("Last action:"),
                variant.keeps_last_action()
            );
        }
    }

    #[test]
    fn incomplete_kb_rejected() {
        let mut kb = KnowledgeBase::builtin().clone();
        kb.action_descriptions.remove(&Aspiration);
        assert!(matches!(
            render_ap_prompt(&indir_state("c"), &Goal::default(), &kb),
            Err(PromptError::IncompleteKnowledgeBase(_))
        ));
        assert!(matches!(
            KnowledgeBase::parse("[process]\na\n[safety]\nb\n"),
            Err(PromptError::IncompleteKnowledgeBase(_))
        ));
        assert!(matches!(
            KnowledgeBase::parse("stray\n[process]\na\n"),
            Err(PromptError::MalformedKnowledgeBase { line: 1, .. })
        ));
        assert!(matches!(
            KnowledgeBase::parse("[action:Irrigation]\nx\n"),
            Err(PromptError::MalformedKnowledgeBase { .. })
        ));
    }

    #[test]
    fn builtin_kb_covers_all_labels() {
        let kb = KnowledgeBase::builtin();
        assert_eq!(kb.action_descriptions.len(), 5);
        assert_eq!(kb.digest(), kb.clone().digest());
    }

    #[test]
    fn redaction() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f9.png");
        std::fs::write(&path, b"pixels").unwrap();
        let bundle = render_ap_prompt(
            &dir_state(&path, vec![]),
            &Goal::default(),
            KnowledgeBase::builtin(),
        )
        .unwrap();
        let red = render_sections_for_report(&bundle);
        assert!(!red.contains(&path.display().to_string()));
        assert!(red.contains(&format!("sha256:{}", sha256_hex(b"pixels"))));
        assert_eq!(red, render_sections_for_report(&bundle.clone()));

        let a = render_sections_for_report(
            &render_ap_prompt(
                &indir_state("one"),
                &Goal::default(),
                KnowledgeBase::builtin(),
            )
            .unwrap(),
        );
        let b = render_sections_for_report(
            &render_ap_prompt(
                &indir_state("two"),
                &Goal::default(),
                KnowledgeBase::builtin(),
            )
            .unwrap(),
        );
        assert_ne!(a, b);
    }
}
