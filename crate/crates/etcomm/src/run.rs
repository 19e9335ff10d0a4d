//! Experiment orchestration: one directory per seed under `out`.
//!
//! ```text
//! out/
//!   config.toml            resolved configuration
//!   summary.json           per-seed summaries
//!   seed-N/
//!     config.toml
//!     checkpoint/          manifest + one JSON file per network
//!     metrics.csv
//!     lambda_trace.csv     stage 2 only
//!     summary.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use etcomm_core::agents::{AgentBundle, TaskKind};
use etcomm_core::bandwidth::{BandwidthBudget, BudgetInputs, ChannelStats};
use etcomm_core::eval::{evaluate, EvalReport, Evaluation};
use etcomm_core::training::{
    run_stage1, run_stage2, streams, LambdaUpdate, MetricRow, RunSettings, TrainingConfig,
};
use etcomm_core::derive_seed;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{manifest, Checkpoint};
use crate::config::{reference_sigma2, ExperimentConfig};
use crate::error::{AppError, AppResult};
use crate::io::{write_csv_with_header, write_json, write_jsonl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Full,
    None,
    Dropout,
}

/// Final-evaluation statistics kept in a run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_steps: f64,
    pub std_steps: f64,
    pub sending_probability: f64,
    pub triggers_per_agent: Vec<u64>,
    pub mean_discounted_penalty: f64,
    pub mean_return: f64,
    pub channel: Option<ChannelStats>,
}

impl From<&EvalReport> for EvalSummary {
    fn from(r: &EvalReport) -> Self {
        EvalSummary {
            episodes: r.episodes,
            mean_steps: r.mean_steps,
            std_steps: r.std_steps,
            sending_probability: r.sending_probability,
            triggers_per_agent: r.triggers_per_agent.clone(),
            mean_discounted_penalty: r.mean_discounted_penalty,
            mean_return: r.mean_return,
            channel: r.channel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stage: String,
    pub seed: u64,
    pub task: TaskKind,
    pub settings: RunSettings,
    pub train_steps: u64,
    pub train_episodes: u64,
    /// Variance behind the final budget.
    pub sigma2: f64,
    pub budget: BandwidthBudget,
    pub lambda: Option<f64>,
    pub eval: EvalSummary,
}

/// Everything a training command produced for one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub metrics: Vec<MetricRow>,
    pub lambda_trace: Vec<LambdaUpdate>,
    pub checkpoint: Checkpoint,
}

pub const METRIC_COLUMNS: [&str; 9] = [
    "step",
    "eval_mean_steps",
    "eval_std_steps",
    "mean_penalty_per_step",
    "lambda",
    "sigma2",
    "p_sup",
    "C_sup",
    "V_penalty",
];

pub const LAMBDA_COLUMNS: [&str; 6] = ["update", "step", "lambda_before", "v_penalty", "c_sup", "lambda_after"];

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

fn echo_config(config: &ExperimentConfig, dir: &Path) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let path = dir.join("config.toml");
    fs::write(&path, config.to_toml_string()).map_err(|e| AppError::io(&path, e))
}

fn progress_line(label: &str, seed: u64) -> impl FnMut(&MetricRow) + '_ {
    move |row: &MetricRow| {
        eprintln!(
            "[{label} seed {seed}] step {:>8}  eval {:7.2} ± {:6.2}  send {:.3}  lambda {:.4}  p_sup {:.3}",
            row.step, row.eval_mean_steps, row.eval_std_steps, row.mean_penalty_per_step, row.lambda, row.p_sup
        );
    }
}

fn final_eval(
    config: &ExperimentConfig,
    agents: &AgentBundle,
    settings: RunSettings,
    seed: u64,
    budget: &BandwidthBudget,
) -> AppResult<Evaluation> {
    Ok(evaluate(
        agents,
        &config.env_spec(),
        settings,
        &config.eval_options(false),
        derive_seed(seed, streams::FINAL_EVAL),
        Some(budget),
        config.training.gamma,
    )?)
}

fn finish(config: &ExperimentConfig, dir: &Path, run: &SeedRun) -> AppResult<()> {
    echo_config(config, dir)?;
    run.checkpoint.save(&dir.join("checkpoint"))?;
    write_csv_with_header(&dir.join("metrics.csv"), &METRIC_COLUMNS, &run.metrics)?;
    if run.summary.lambda.is_some() {
        write_csv_with_header(&dir.join("lambda_trace.csv"), &LAMBDA_COLUMNS, &run.lambda_trace)?;
    }
    write_json(&dir.join("summary.json"), &run.summary)
}

fn write_index(config: &ExperimentConfig, out: &Path, runs: &[SeedRun]) -> AppResult<()> {
    echo_config(config, out)?;
    let summaries: Vec<&RunSummary> = runs.iter().map(|r| &r.summary).collect();
    write_json(&out.join("summary.json"), &summaries)
}

/// Budget inputs for stage-1 style runs: the configured variance, or the
/// task's reference value as a starting estimate.
fn stage1_budget(config: &ExperimentConfig) -> BudgetInputs {
    config.budget_inputs(config.fixed_sigma2().unwrap_or_else(|| reference_sigma2(config.task)))
}

fn train_gated(
    config: &ExperimentConfig,
    out: &Path,
    settings: RunSettings,
    stage: &str,
) -> AppResult<Vec<SeedRun>> {
    config.validate()?;
    let env = config.env_spec();
    let inputs = stage1_budget(config);
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let dir = seed_dir(out, seed);
        let trained = run_stage1(
            &config.training,
            &env,
            settings,
            &inputs,
            seed,
            None,
            &mut progress_line(stage, seed),
        )?;
        let sigma2 = config.fixed_sigma2().unwrap_or(trained.sigma2);
        let budget = budget_or_reference(config, sigma2)?;
        let eval = final_eval(config, &trained.agents, settings, seed, &budget)?;
        let run = SeedRun {
            summary: RunSummary {
                stage: stage.to_string(),
                seed,
                task: config.task,
                settings,
                train_steps: config.training.total_steps,
                train_episodes: trained.episodes,
                sigma2,
                budget,
                lambda: None,
                eval: EvalSummary::from(&eval.report),
            },
            checkpoint: Checkpoint {
                manifest: manifest(config.task_spec(), settings, stage, seed, Some(trained.sigma2)),
                agents: trained.agents,
                values: trained.values,
            },
            metrics: trained.metrics,
            lambda_trace: Vec::new(),
            dir: dir.clone(),
        };
        finish(config, &dir, &run)?;
        runs.push(run);
    }
    write_index(config, out, &runs)?;
    Ok(runs)
}

/// Budget at `sigma2`, or at the task's reference variance when no usable
/// estimate exists.
fn budget_or_reference(config: &ExperimentConfig, sigma2: f64) -> AppResult<BandwidthBudget> {
    let sigma2 = if sigma2 > 0.0 && sigma2.is_finite() {
        sigma2
    } else {
        reference_sigma2(config.task)
    };
    Ok(config.budget_inputs(sigma2).derive()?)
}

/// Stage 1: encoder, actor and critic under full communication.
pub fn train_stage1(config: &ExperimentConfig, out: &Path) -> AppResult<Vec<SeedRun>> {
    train_gated(config, out, config.full_settings(), "stage1")
}

/// Baselines trained from scratch under their own gating.
pub fn train_baseline(config: &ExperimentConfig, out: &Path, kind: Baseline) -> AppResult<Vec<SeedRun>> {
    let (settings, stage) = match kind {
        Baseline::Full => (config.full_settings(), "baseline-full"),
        Baseline::None => (RunSettings::never(), "baseline-none"),
        Baseline::Dropout => (RunSettings::dropout(config.budget.dropout_p), "baseline-dropout"),
    };
    train_gated(config, out, settings, stage)
}

/// Stage 2: gate, Lagrangian and penalty heads on top of the stage-1
/// checkpoints found under `init/seed-N/checkpoint`.
pub fn train_stage2(config: &ExperimentConfig, out: &Path, init: &Path) -> AppResult<Vec<SeedRun>> {
    config.validate()?;
    let env = config.env_spec();
    let settings = config.learned_settings();
    let training = TrainingConfig {
        track_sigma2: config.training.track_sigma2 && config.fixed_sigma2().is_none(),
        ..config.training
    };
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let dir = seed_dir(out, seed);
        let source = seed_dir(init, seed).join("checkpoint");
        let start = Checkpoint::load(&source)?;
        start.expect_task(&config.task_spec())?;
        let sigma2 = config
            .fixed_sigma2()
            .or(start.manifest.sigma2)
            .unwrap_or_else(|| reference_sigma2(config.task));
        let trained = run_stage2(
            &training,
            &env,
            settings,
            &config.budget_inputs(sigma2),
            seed,
            start.agents,
            start.values,
            &mut progress_line("stage2", seed),
        )?;
        let budget = trained.final_budget;
        let eval = final_eval(config, &trained.agents, settings, seed, &budget)?;
        let run = SeedRun {
            summary: RunSummary {
                stage: "stage2".to_string(),
                seed,
                task: config.task,
                settings,
                train_steps: training.total_steps,
                train_episodes: trained.episodes,
                sigma2: budget.inputs.sigma2,
                budget,
                lambda: Some(trained.lambda),
                eval: EvalSummary::from(&eval.report),
            },
            checkpoint: Checkpoint {
                manifest: manifest(config.task_spec(), settings, "stage2", seed, Some(budget.inputs.sigma2)),
                agents: trained.agents,
                values: trained.values,
            },
            metrics: trained.metrics,
            lambda_trace: trained.lambda_trace,
            dir: dir.clone(),
        };
        finish(config, &dir, &run)?;
        runs.push(run);
    }
    write_index(config, out, &runs)?;
    Ok(runs)
}

/// Evaluates a checkpoint under the gating it was trained with and writes
/// `eval.json` (and `trajectory.jsonl` when recording).
pub fn evaluate_checkpoint(
    config: &ExperimentConfig,
    checkpoint: &Path,
    out: &Path,
    record: bool,
) -> AppResult<Evaluation> {
    config.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    ck.expect_task(&config.task_spec())?;
    let sigma2 = config
        .fixed_sigma2()
        .or(ck.manifest.sigma2)
        .unwrap_or_else(|| reference_sigma2(config.task));
    let budget = budget_or_reference(config, sigma2)?;
    let seed = config.seeds[0];
    let evaluation = evaluate(
        &ck.agents,
        &config.env_spec(),
        ck.manifest.settings,
        &config.eval_options(record),
        derive_seed(seed, streams::FINAL_EVAL),
        Some(&budget),
        config.training.gamma,
    )?;
    echo_config(config, out)?;
    write_json(&out.join("eval.json"), &evaluation.report)?;
    if record {
        write_jsonl(&out.join("trajectory.jsonl"), &evaluation.trajectory)?;
    }
    Ok(evaluation)
}
