//! `llm-sap`: build datasets, caption frames, plan, roll out, evaluate and
//! export fine-tuning data.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use sap_core::config::{BackendKind, BackendRole, Config};
use sap_core::dataset::{read_samples, PlanningSample};
use sap_core::domain::SynonymTable;
use sap_core::fsutil::write_atomic;
use sap_core::gateway::Backend;
use sap_core::memory::MemoryVariant;
use sap_core::metrics::RelaxedPolicy;
use sap_core::pipeline::{self, PipelineError, PlanEnv, RunManifest};
use sap_core::prompts::{KnowledgeBase, PromptFactory};

#[derive(Parser)]
#[command(name = "llm-sap", version, about = "Next-action planning experiments")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Log more (repeat for debug output).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn frame annotations into train/test planning samples.
    BuildDataset(BuildDataset),
    /// Caption every near frame so indirect-memory runs hit the cache.
    Caption(SamplesOut),
    /// Predict ranked next actions for every sample.
    Plan(Plan),
    /// Plan a multi-step action chain from one sample.
    Rollout(Rollout),
    /// Score predictions.
    Evaluate(Evaluate),
    /// Distill teacher conversations for fine-tuning.
    ExportSft(ExportSft),
    /// Merge several metrics files into one table.
    Report(Report),
}

#[derive(Args)]
struct BuildDataset {
    /// Annotation CSV files (`video_id,frame_index,action`).
    #[arg(long, required = true, num_args = 1..)]
    annotations: Vec<PathBuf>,
    /// Segment CSV (`video_id,start_frame,end_frame,note`).
    #[arg(long)]
    segments: Option<PathBuf>,
    #[arg(long)]
    train_list: PathBuf,
    #[arg(long)]
    test_list: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SamplesOut {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Plan {
    #[command(flatten)]
    io: SamplesOut,
    /// Overrides `run.variant`.
    #[arg(long)]
    variant: Option<MemoryVariant>,
    /// Overrides `run.repair`.
    #[arg(long)]
    repair: bool,
}

#[derive(Args)]
struct Rollout {
    #[command(flatten)]
    io: SamplesOut,
    #[arg(long)]
    video: String,
    #[arg(long)]
    step: usize,
    #[arg(long, default_value_t = 3)]
    horizon: usize,
    #[arg(long)]
    variant: Option<MemoryVariant>,
    /// Re-observe recorded frames at each step instead of freezing the seed frame.
    #[arg(long)]
    replay: bool,
}

#[derive(Args)]
struct Evaluate {
    #[arg(long)]
    predictions: PathBuf,
    /// Defaults to `failures.jsonl` next to the predictions.
    #[arg(long)]
    failures: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Row label in the table.
    #[arg(long, default_value = "model")]
    name: String,
    /// `exclude-missing-lookahead` or `target-only`; overrides the config.
    #[arg(long)]
    relaxed_policy: Option<String>,
}

#[derive(Args)]
struct ExportSft {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
    /// Memory variants to distill; both direct and indirect by default.
    #[arg(long = "variant")]
    variants: Vec<MemoryVariant>,
    /// Keep at most this many records per variant.
    #[arg(long)]
    limit: Option<usize>,
    /// Seed for `--limit` sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Report {
    /// `metrics.json` files written by `evaluate`.
    #[arg(long, required = true, num_args = 1..)]
    metrics: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Successful run, possibly with some failed samples.
enum Finished {
    Clean,
    Partial(usize),
}

fn load_config(path: Option<&Path>) -> Result<Config, PipelineError> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn samples(path: &Path) -> Result<Vec<PlanningSample>, PipelineError> {
    Ok(read_samples(path)?)
}

fn argv() -> Vec<String> {
    std::env::args().collect()
}

struct Backends {
    planner: Option<Arc<dyn Backend>>,
    captioner: Option<Arc<dyn Backend>>,
}

/// Builds the backends a variant needs; the captioner only for caption memories.
fn backends(
    config: &Config,
    planner_role: BackendRole,
    variant: MemoryVariant,
) -> Result<Backends, PipelineError> {
    Ok(Backends {
        planner: Some(config.backend(planner_role)?),
        captioner: if variant.uses_caption() {
            Some(config.backend(BackendRole::Captioner)?)
        } else {
            None
        },
    })
}

fn roles_for(planner_role: BackendRole, variant: MemoryVariant) -> Vec<BackendRole> {
    let mut roles = vec![planner_role];
    if variant.uses_caption() {
        roles.push(BackendRole::Captioner);
    }
    roles
}

fn parallelism(config: &Config, role: BackendRole) -> usize {
    let s = config.section(role);
    match s.kind {
        BackendKind::Http => s.http.parallelism,
        BackendKind::Mock => 4,
    }
}

fn run(cli: Cli) -> Result<Finished, PipelineError> {
    let config = load_config(cli.config.as_deref())?;
    let kb = config.knowledge_base()?;
    let synonyms = config.synonyms()?;
    let goal = config.goal()?;
    let factory = PromptFactory::new(config.run.template_version.clone());

    match cli.command {
        Command::BuildDataset(a) => {
            let args = pipeline::BuildDatasetArgs {
                annotations: a.annotations,
                segments: a.segments,
                train_list: a.train_list,
                test_list: a.test_list,
                out_dir: a.out,
                layout: config.layout(),
                history_window: config.run.history_window,
                gap_tolerance: config.run.gap_tolerance,
            };
            let manifest = RunManifest::new("build-dataset", argv(), &config, &[])?;
            let summary = pipeline::cmd_build_dataset(&args, &synonyms, manifest)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            Ok(Finished::Clean)
        }
        Command::Caption(a) => {
            let samples = samples(&a.samples)?;
            let manifest = RunManifest::new("caption", argv(), &config, &[BackendRole::Captioner])?
                .with_count("samples", samples.len());
            let captioner = config.backend(BackendRole::Captioner)?;
            let summary = pipeline::cmd_caption(
                captioner.as_ref(),
                &samples,
                parallelism(&config, BackendRole::Captioner),
                &a.out,
                &manifest,
            )?;
            println!(
                "captioned {} of {} frames ({} failed)",
                summary.captioned, summary.frames, summary.failed
            );
            Ok(finished(summary.failed))
        }
        Command::Plan(a) => {
            let variant = a.variant.map_or_else(|| config.variant(), Ok)?;
            let samples = samples(&a.io.samples)?;
            let manifest = RunManifest::new(
                "plan",
                argv(),
                &config,
                &roles_for(BackendRole::Planner, variant),
            )?
            .with_count("samples", samples.len());
            let b = backends(&config, BackendRole::Planner, variant)?;
            let env = plan_env(
                &config,
                &b,
                variant,
                &factory,
                &kb,
                &goal,
                &synonyms,
                a.repair || config.run.repair,
            );
            let summary = pipeline::cmd_plan(&env, &samples, &a.io.out, &manifest)?;
            println!(
                "predicted {} samples, {} failed",
                summary.predicted, summary.failed
            );
            Ok(finished(summary.failed))
        }
        Command::Rollout(a) => {
            let variant = a.variant.map_or_else(|| config.variant(), Ok)?;
            let samples = samples(&a.io.samples)?;
            let seed = samples
                .iter()
                .find(|s| s.video_id == a.video && s.step_index == a.step)
                .ok_or_else(|| {
                    PipelineError::Invalid(format!(
                        "no sample for video {} step {}",
                        a.video, a.step
                    ))
                })?;
            let manifest = RunManifest::new(
                "rollout",
                argv(),
                &config,
                &roles_for(BackendRole::Planner, variant),
            )?
            .with_count("samples", samples.len());
            manifest.write(&a.io.out)?;
            let b = backends(&config, BackendRole::Planner, variant)?;
            let env = plan_env(
                &config,
                &b,
                variant,
                &factory,
                &kb,
                &goal,
                &synonyms,
                config.run.repair,
            );
            let result = pipeline::cmd_rollout(
                &env,
                &pipeline::RolloutArgs {
                    seed,
                    horizon: a.horizon,
                    truth: &samples,
                    replay: a.replay,
                },
            )?;
            let path =
                a.io.out
                    .join(format!("rollout.{}.{}.json", a.video, a.step));
            let text = serde_json::to_string_pretty(&result).expect("rollout serializes") + "\n";
            write_atomic(&path, text.as_bytes()).map_err(|source| PipelineError::Io {
                path: path.clone(),
                source,
            })?;
            let plan: Vec<&str> = result.plan.iter().map(|l| l.canonical_name()).collect();
            println!("plan: {}", plan.join(" -> "));
            match result.error {
                Some(e) => {
                    log::error!("rollout stopped early: {e}");
                    Ok(Finished::Partial(1))
                }
                None => Ok(Finished::Clean),
            }
        }
        Command::Evaluate(a) => {
            let policy = match &a.relaxed_policy {
                Some(p) => parse_policy(p)?,
                None => config.run.relaxed_policy,
            };
            let failures = a
                .failures
                .or_else(|| a.predictions.parent().map(|d| d.join(pipeline::FAILURES)));
            let args = pipeline::EvaluateArgs {
                predictions: a.predictions,
                failures,
                out_dir: a.out,
                policy,
                name: a.name,
            };
            let manifest = RunManifest::new("evaluate", argv(), &config, &[])?;
            pipeline::cmd_evaluate(&args, manifest)?;
            print!(
                "{}",
                std::fs::read_to_string(args.out_dir.join(pipeline::REPORT_TABLE))
                    .unwrap_or_default()
            );
            Ok(Finished::Clean)
        }
        Command::ExportSft(a) => {
            let variants = if a.variants.is_empty() {
                vec![MemoryVariant::DirNhfm, MemoryVariant::IndirNhfm]
            } else {
                a.variants
            };
            let train = samples(&a.train)?;
            let test_videos: BTreeSet<String> =
                samples(&a.test)?.into_iter().map(|s| s.video_id).collect();
            let mut roles = vec![BackendRole::Teacher];
            if variants.iter().any(|v| v.uses_caption()) {
                roles.push(BackendRole::Captioner);
            }
            let manifest = RunManifest::new("export-sft", argv(), &config, &roles)?;
            let teacher = config.backend(BackendRole::Teacher)?;
            let captioner = if roles.contains(&BackendRole::Captioner) {
                Some(config.backend(BackendRole::Captioner)?)
            } else {
                None
            };
            let layout = config.layout();
            let args = pipeline::ExportSftArgs {
                teacher: teacher.as_ref(),
                captioner: captioner.as_deref(),
                variants,
                factory: factory.clone(),
                kb: &kb,
                goal: &goal,
                synonyms: &synonyms,
                layout: &layout,
                parallelism: parallelism(&config, BackendRole::Teacher),
                out: a.out,
                per_variant_limit: a.limit.map(|n| (n, a.seed)),
            };
            let summary = pipeline::cmd_export_sft(&args, &train, &test_videos, manifest)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            Ok(Finished::Clean)
        }
        Command::Report(a) => {
            let table = pipeline::cmd_report(&a.metrics, &a.out)?;
            print!("{table}");
            Ok(Finished::Clean)
        }
    }
}

fn finished(failed: usize) -> Finished {
    if failed == 0 {
        Finished::Clean
    } else {
        Finished::Partial(failed)
    }
}

fn parse_policy(s: &str) -> Result<RelaxedPolicy, PipelineError> {
    match s {
        "exclude-missing-lookahead" => Ok(RelaxedPolicy::ExcludeMissingLookahead),
        "target-only" => Ok(RelaxedPolicy::TargetOnly),
        other => Err(PipelineError::Invalid(format!(
            "unknown relaxed policy {other:?}"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn plan_env<'a>(
    config: &Config,
    b: &'a Backends,
    variant: MemoryVariant,
    factory: &PromptFactory,
    kb: &'a KnowledgeBase,
    goal: &'a sap_core::domain::Goal,
    synonyms: &'a SynonymTable,
    repair: bool,
) -> PlanEnv<'a> {
    PlanEnv {
        planner: b.planner.as_deref().expect("planner built"),
        captioner: b.captioner.as_deref(),
        variant,
        factory: factory.clone(),
        kb,
        goal,
        synonyms,
        history_window: config.run.history_window,
        repair,
        parallelism: parallelism(config, BackendRole::Planner),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Finished::Clean) => ExitCode::SUCCESS,
        Ok(Finished::Partial(n)) => {
            eprintln!("error: {n} item(s) failed; see the failure log in the output directory");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_configuration() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
