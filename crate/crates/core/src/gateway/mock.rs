//! Deterministic in-process backends.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, ChatRequest, ChatResponse};
use crate::domain::{ActionLabel, SynonymTable};
use crate::parser::{render_fixture, PlanResponse, RankedAction};

/// Ranked labels keyed by `(video_id, step_index)`.
pub type Script = BTreeMap<(String, usize), Vec<ActionLabel>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockPolicy {
    /// Rank 1 is the true next action, rank 2 the one after it when known.
    Oracle,
    Constant(ActionLabel),
    Scripted(Script),
    /// Three distinct labels drawn per sample from a seeded generator.
    UniformRandom(u64),
}

impl MockPolicy {
    pub fn name(&self) -> String {
        match self {
            MockPolicy::Oracle => "oracle".into(),
            MockPolicy::Constant(l) => format!("constant:{}", l.identifier()),
            MockPolicy::Scripted(_) => "scripted".into(),
            MockPolicy::UniformRandom(seed) => format!("random:{seed}"),
        }
    }

    /// Reads a script file: `video_id<TAB>step_index<TAB>Label[,Label[,Label]]`.
    pub fn load_script(path: &Path) -> Result<Script, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let mut script = Script::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad =
                || BackendError::Config(format!("{}:{}: bad script line", path.display(), i + 1));
            let mut cols = line.split('\t');
            let (Some(video), Some(step), Some(labels), None) =
                (cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(bad());
            };
            let step: usize = step.trim().parse().map_err(|_| bad())?;
            let labels = labels
                .split(',')
                .map(|l| SynonymTable::builtin().lookup(l).map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()?;
            if labels.is_empty() || labels.len() > 3 {
                return Err(bad());
            }
            script.insert((video.trim().to_string(), step), labels);
        }
        Ok(script)
    }
}

impl FromStr for MockPolicy {
    type Err = BackendError;

    /// `oracle`, `constant:<Label>` or `random:<seed>`. Scripted policies are
    /// loaded from a file with [`MockPolicy::load_script`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        match kind.trim() {
            "oracle" => Ok(MockPolicy::Oracle),
            "constant" => SynonymTable::builtin()
                .lookup(arg)
                .map(MockPolicy::Constant)
                .map_err(|e| BackendError::Config(e.to_string())),
            "random" => arg
                .trim()
                .parse()
                .map(MockPolicy::UniformRandom)
                .map_err(|_| BackendError::Config(format!("bad random seed {arg:?}"))),
            other => Err(BackendError::Config(format!(
                "unknown mock policy {other:?}"
            ))),
        }
    }
}

/// Extends `ranked` to three entries with unused labels in vocabulary order.
fn fill_to_three(mut ranked: Vec<ActionLabel>) -> [ActionLabel; 3] {
    for label in ActionLabel::ALL {
        if ranked.len() >= 3 {
            break;
        }
        if !ranked.contains(&label) {
            ranked.push(label);
        }
    }
    [ranked[0], ranked[1], ranked[2]]
}

fn sample_seed(seed: u64, video: &str, step: usize) -> u64 {
    let digest = Sha256::digest(format!("{seed}\0{video}\0{step}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Response text for a ranked triple, in the canonical plan layout.
pub fn plan_text(labels: [ActionLabel; 3], policy: &str) -> String {
    let action = |rank: usize, label: ActionLabel| RankedAction {
        label,
        rationale: format!("Ranked {} by the {policy} mock policy.", rank + 1),
        raw_phrase: label.canonical_name().to_string(),
    };
    render_fixture(&PlanResponse {
        progress_assessment: format!("Mock assessment ({policy} policy)."),
        safety_considerations: "No safety analysis is produced by mock backends.".into(),
        ranked_actions: [
            action(0, labels[0]),
            action(1, labels[1]),
            action(2, labels[2]),
        ],
    })
}

/// Planner backend whose ranked actions follow a [`MockPolicy`].
pub struct MockPlanner {
    policy: MockPolicy,
    calls: AtomicUsize,
}

impl MockPlanner {
    pub fn new(policy: MockPolicy) -> Self {
        MockPlanner {
            policy,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn policy(&self) -> &MockPolicy {
        &self.policy
    }

    pub fn rank(&self, request: &ChatRequest) -> Result<[ActionLabel; 3], BackendError> {
        let context = request.context.as_ref();
        let need_context = || {
            BackendError::InvalidRequest(format!(
                "{} policy needs a plan context on the request",
                self.policy.name()
            ))
        };
        Ok(match &self.policy {
            MockPolicy::Oracle => {
                let ctx = context.ok_or_else(need_context)?;
                let mut ranked = Vec::new();
                for &label in ctx.future.iter().take(2) {
                    if !ranked.contains(&label) {
                        ranked.push(label);
                    }
                }
                if ranked.is_empty() {
                    return Err(BackendError::InvalidRequest(
                        "oracle policy needs at least one future action".into(),
                    ));
                }
                fill_to_three(ranked)
            }
            MockPolicy::Constant(label) => fill_to_three(vec![*label]),
            MockPolicy::Scripted(script) => {
                let ctx = context.ok_or_else(need_context)?;
                let labels = script
                    .get(&(ctx.video_id.clone(), ctx.step_index))
                    .ok_or_else(|| {
                        BackendError::InvalidRequest(format!(
                            "no script entry for {} step {}",
                            ctx.video_id, ctx.step_index
                        ))
                    })?;
                fill_to_three(labels.clone())
            }
            MockPolicy::UniformRandom(seed) => {
                let (video, step) = context
                    .map(|c| (c.video_id.as_str(), c.step_index))
                    .unwrap_or(("", 0));
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(*seed, video, step));
                let mut labels = ActionLabel::ALL;
                labels.shuffle(&mut rng);
                [labels[0], labels[1], labels[2]]
            }
        })
    }
}

impl Backend for MockPlanner {
    fn backend_id(&self) -> String {
        format!("mock:{}", self.policy.name())
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let labels = self.rank(request)?;
        Ok(ChatResponse::local(
            plan_text(labels, &self.policy.name()),
            self.backend_id(),
        ))
    }
}

/// Replies with `"echo: "` followed by the last user message.
#[derive(Debug, Default)]
pub struct EchoBackend;

pub fn echo_text(user_text: &str) -> String {
    format!("echo: {user_text}")
}

impl Backend for EchoBackend {
    fn backend_id(&self) -> String {
        "mock:echo".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let last = request
            .followups
            .iter()
            .rev()
            .find(|t| t.role == super::Role::User)
            .map(|t| t.content.as_str())
            .unwrap_or(&request.user_text);
        Ok(ChatResponse::local(echo_text(last), self.backend_id()))
    }
}

/// Captioner returning fixed text, or a frame-hash description when no text
/// is given.
#[derive(Debug)]
pub struct MockCaptioner {
    text: Option<String>,
    calls: AtomicUsize,
}

impl MockCaptioner {
    pub fn fixed(text: impl Into<String>) -> Self {
        MockCaptioner {
            text: Some(text.into()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn describing() -> Self {
        MockCaptioner {
            text: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for MockCaptioner {
    fn backend_id(&self) -> String {
        "mock:caption".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = match &self.text {
            Some(t) => t.clone(),
            None => {
                let hash = request
                    .attachments
                    .first()
                    .map(|a| &a.sha256[..12])
                    .unwrap_or("no-image");
                format!("Synthetic description of frame {hash}: grasper and hook visible in the operative field.")
            }
        };
        Ok(ChatResponse::local(text, self.backend_id()))
    }
}

/// Returns scripted replies in call order; the last one repeats.
pub struct SequenceBackend {
    replies: Vec<String>,
    calls: AtomicUsize,
    seen: Mutex<Vec<ChatRequest>>,
}

impl SequenceBackend {
    pub fn new(replies: Vec<String>) -> Self {
        assert!(!replies.is_empty(), "at least one reply");
        SequenceBackend {
            replies,
            calls: AtomicUsize::new(0),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

impl Backend for SequenceBackend {
    fn backend_id(&self) -> String {
        "mock:sequence".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        self.seen
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(request.clone());
        let text = &self.replies[n.min(self.replies.len() - 1)];
        Ok(ChatResponse::local(text.clone(), self.backend_id()))
    }
}
