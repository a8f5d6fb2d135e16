use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    ensure_dir, write_jsonl, PipelineError, RunManifest, CAPTIONS, FAILURES, PREDICTIONS, RESPONSES,
};
use crate::dataset::PlanningSample;
use crate::domain::{ActionLabel, ActionPlan, Goal, SynonymTable};
use crate::gateway::{run_bounded, Backend, BackendError, PlanContext};
use crate::memory::{build_memory, caption_frame, MemoryError, MemoryState, MemoryVariant};
use crate::metrics::{Exclusion, PredictionRecord};
use crate::parser::{parse_plan_with, repair_and_reparse, PlanResponse, RepairError};
use crate::prompts::{KnowledgeBase, PromptFactory};

/// Shared inputs for planning commands.
pub struct PlanEnv<'a> {
    pub planner: &'a dyn Backend,
    pub captioner: Option<&'a dyn Backend>,
    pub variant: MemoryVariant,
    pub factory: PromptFactory,
    pub kb: &'a KnowledgeBase,
    pub goal: &'a Goal,
    pub synonyms: &'a SynonymTable,
    pub history_window: usize,
    /// Ask once for a reformatted answer when a response does not parse.
    pub repair: bool,
    pub parallelism: usize,
}

/// Raw planner output kept for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseLine {
    pub video_id: String,
    pub step_index: usize,
    pub backend_id: String,
    pub repaired: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSample {
    pub record: PredictionRecord,
    pub response: ResponseLine,
}

/// Why one sample produced no prediction.
#[derive(Debug, Clone, PartialEq)]
enum Failure {
    /// Affects every sample; abort the command.
    Fatal(BackendError),
    Sample(String),
}

fn is_fatal(e: &BackendError) -> bool {
    matches!(e, BackendError::AuthMissing(_) | BackendError::Config(_))
}

fn backend_failure(what: &str, e: BackendError) -> Failure {
    if is_fatal(&e) {
        Failure::Fatal(e)
    } else {
        Failure::Sample(format!("{what}: {e}"))
    }
}

fn memory_failure(e: MemoryError) -> Failure {
    match e {
        MemoryError::Backend(e) => backend_failure("captioner", e),
        other => Failure::Sample(format!("memory: {other}")),
    }
}

/// Queries the planner for one memory state and parses the answer.
fn query(
    env: &PlanEnv,
    memory: &MemoryState,
    context: PlanContext,
) -> Result<(PlanResponse, ResponseLine), Failure> {
    let (video_id, step_index) = (context.video_id.clone(), context.step_index);
    let bundle = env
        .factory
        .ap_prompt(memory, env.goal, env.kb)
        .map_err(|e| Failure::Sample(format!("prompt: {e}")))?;
    let request = bundle
        .to_request(Some(context.clone()))
        .map_err(|e| Failure::Sample(format!("attachment: {e}")))?;
    let response = env
        .planner
        .complete(&request)
        .map_err(|e| backend_failure("planner", e))?;
    let line = |text: String, repaired| ResponseLine {
        video_id: video_id.clone(),
        step_index,
        backend_id: response.backend_id.clone(),
        repaired,
        text,
    };
    match parse_plan_with(&response.text, env.synonyms) {
        Ok(plan) => Ok((plan, line(response.text.clone(), false))),
        Err(e) if !env.repair => Err(Failure::Sample(format!("parse: {e}"))),
        Err(_) => {
            match repair_and_reparse(
                &response.text,
                env.planner,
                &bundle,
                Some(context),
                env.synonyms,
            ) {
                Ok(outcome) => Ok((outcome.plan, line(outcome.repaired_text, true))),
                Err(RepairError::Backend(e)) => Err(backend_failure("planner (repair)", e)),
                Err(e) => Err(Failure::Sample(format!("parse: {e}"))),
            }
        }
    }
}

fn context_for(sample: &PlanningSample) -> PlanContext {
    PlanContext {
        video_id: sample.video_id.clone(),
        step_index: sample.step_index,
        future: std::iter::once(sample.target_next)
            .chain(sample.lookahead_next)
            .collect(),
    }
}

fn plan_one(env: &PlanEnv, sample: &PlanningSample) -> Result<PlannedSample, Failure> {
    let memory = build_memory(sample, env.variant, env.captioner).map_err(memory_failure)?;
    let (plan, response) = query(env, &memory, context_for(sample))?;
    Ok(PlannedSample {
        record: PredictionRecord {
            video_id: sample.video_id.clone(),
            step_index: sample.step_index,
            ranked_labels: plan.ranked_labels().to_vec(),
            target_next: sample.target_next,
            lookahead_next: sample.lookahead_next,
        },
        response,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub predicted: usize,
    pub failed: usize,
}

fn sorted(samples: &[PlanningSample]) -> Vec<PlanningSample> {
    let mut out = samples.to_vec();
    out.sort_by_key(PlanningSample::key);
    out
}

/// Plans every sample and writes predictions, raw responses and failures.
/// A failed sample never stops the others.
pub fn cmd_plan(
    env: &PlanEnv,
    samples: &[PlanningSample],
    out_dir: &Path,
    manifest: &RunManifest,
) -> Result<PlanSummary, PipelineError> {
    manifest.write(out_dir)?;
    let samples = sorted(samples);
    let outcomes = run_bounded(&samples, env.parallelism, |_, s| plan_one(env, s));
    let mut records = Vec::new();
    let mut responses = Vec::new();
    let mut failures = Vec::new();
    for (sample, outcome) in samples.iter().zip(outcomes) {
        match outcome {
            Ok(p) => {
                records.push(p.record);
                responses.push(p.response);
            }
            Err(Failure::Fatal(e)) => return Err(PipelineError::Backend(e)),
            Err(Failure::Sample(reason)) => {
                log::warn!(
                    "plan: {} step {}: {reason}",
                    sample.video_id,
                    sample.step_index
                );
                failures.push(Exclusion {
                    video_id: sample.video_id.clone(),
                    step_index: sample.step_index,
                    reason,
                });
            }
        }
    }
    write_jsonl(&out_dir.join(PREDICTIONS), &records)?;
    write_jsonl(&out_dir.join(RESPONSES), &responses)?;
    write_jsonl(&out_dir.join(FAILURES), &failures)?;
    Ok(PlanSummary {
        predicted: records.len(),
        failed: failures.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionLine {
    pub video_id: String,
    pub frame_index: u64,
    pub generator: String,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionSummary {
    pub frames: usize,
    pub captioned: usize,
    pub failed: usize,
}

/// Captions every distinct near frame. With a caching backend, re-running
/// only fetches frames that are not cached yet.
pub fn cmd_caption(
    captioner: &dyn Backend,
    samples: &[PlanningSample],
    parallelism: usize,
    out_dir: &Path,
    manifest: &RunManifest,
) -> Result<CaptionSummary, PipelineError> {
    manifest.write(out_dir)?;
    let frames: Vec<_> = samples
        .iter()
        .map(|s| {
            (
                (s.near_frame.video_id.clone(), s.near_frame.frame_index),
                s.near_frame.clone(),
            )
        })
        .collect::<BTreeMap<_, _>>()
        .into_values()
        .collect();
    let outcomes = run_bounded(&frames, parallelism, |_, f| caption_frame(f, captioner));
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for (frame, outcome) in frames.iter().zip(outcomes) {
        match outcome.map_err(memory_failure) {
            Ok(caption) => lines.push(CaptionLine {
                video_id: frame.video_id.clone(),
                frame_index: frame.frame_index,
                generator: caption.generator_id().to_string(),
                text: caption.text().to_string(),
            }),
            Err(Failure::Fatal(e)) => return Err(PipelineError::Backend(e)),
            Err(Failure::Sample(reason)) => {
                log::warn!(
                    "caption: {} frame {}: {reason}",
                    frame.video_id,
                    frame.frame_index
                );
                failures.push(Exclusion {
                    video_id: frame.video_id.clone(),
                    step_index: frame.frame_index as usize,
                    reason,
                });
            }
        }
    }
    ensure_dir(out_dir)?;
    write_jsonl(&out_dir.join(CAPTIONS), &lines)?;
    write_jsonl(&out_dir.join("caption_failures.jsonl"), &failures)?;
    Ok(CaptionSummary {
        frames: frames.len(),
        captioned: lines.len(),
        failed: failures.len(),
    })
}

pub struct RolloutArgs<'a> {
    pub seed: &'a PlanningSample,
    pub horizon: usize,
    /// Samples of the same video; used for ground-truth context and for
    /// replay observations.
    pub truth: &'a [PlanningSample],
    /// Re-observe the recorded near frame at every step instead of freezing
    /// the seed observation.
    pub replay: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub video_id: String,
    pub seed_step: usize,
    pub horizon: usize,
    pub plan: Vec<ActionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Plans `horizon` actions by feeding each rank-1 prediction back into the
/// memory. Errors stop the chain and are reported with the partial plan.
pub fn cmd_rollout(env: &PlanEnv, args: &RolloutArgs) -> Result<RolloutResult, PipelineError> {
    let mut plan =
        ActionPlan::new(args.horizon).map_err(|e| PipelineError::Invalid(e.to_string()))?;
    let seed = args.seed;
    let truth_at = |step: usize| {
        args.truth
            .iter()
            .find(|s| s.video_id == seed.video_id && s.step_index == step)
    };
    let mut result = RolloutResult {
        video_id: seed.video_id.clone(),
        seed_step: seed.step_index,
        horizon: args.horizon,
        plan: Vec::new(),
        error: None,
    };
    let mut memory = match build_memory(seed, env.variant, env.captioner).map_err(memory_failure) {
        Ok(m) => m,
        Err(Failure::Fatal(e)) => return Err(PipelineError::Backend(e)),
        Err(Failure::Sample(reason)) => {
            result.error = Some(reason);
            return Ok(result);
        }
    };
    for j in 0..args.horizon {
        let step = seed.step_index + j;
        let truth = truth_at(step);
        if args.replay && j > 0 {
            let Some(recorded) = truth else {
                result.error = Some(format!("no recorded observation for step {step}"));
                break;
            };
            match build_memory(recorded, env.variant, env.captioner).map_err(memory_failure) {
                Ok(observed) => {
                    memory.near_frame = observed.near_frame;
                    memory.near_caption = observed.near_caption;
                }
                Err(Failure::Fatal(e)) => return Err(PipelineError::Backend(e)),
                Err(Failure::Sample(reason)) => {
                    result.error = Some(reason);
                    break;
                }
            }
        }
        let context = match truth {
            Some(s) => context_for(s),
            None => PlanContext {
                video_id: seed.video_id.clone(),
                step_index: step,
                future: Vec::new(),
            },
        };
        match query(env, &memory, context) {
            Ok((response, _)) => {
                let next = response.top();
                plan.push(next).expect("loop bounded by horizon");
                memory.advance(next, env.history_window);
            }
            Err(Failure::Fatal(e)) => return Err(PipelineError::Backend(e)),
            Err(Failure::Sample(reason)) => {
                result.error = Some(format!("step {step}: {reason}"));
                break;
            }
        }
    }
    result.plan = plan.steps().to_vec();
    Ok(result)
}
