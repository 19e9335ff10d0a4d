use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use etcomm::analysis::{gating_timeline, pca_points, render_curves, trigger_counts, Table};
use etcomm::config::{reference_sigma2, Ablation, ExperimentConfig};
use etcomm::error::{AppError, AppResult};
use etcomm::io::{read_jsonl, write_csv, write_json};
use etcomm::run::{self, Baseline};
use etcomm_core::bandwidth::BandwidthBudget;
use etcomm_core::eval::TrajectoryStep;

/// Event-triggered communication for multi-agent reinforcement learning
/// under a channel budget.
#[derive(Parser)]
#[command(name = "etcomm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the sending-probability ceiling and penalty threshold.
    Budget(BudgetArgs),
    /// Train encoder, actor and critic with full communication.
    TrainStage1(RunArgs),
    /// Train the gating network on top of stage-1 checkpoints.
    TrainStage2 {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory of a `train-stage1` run.
        #[arg(long)]
        init: PathBuf,
    },
    /// Train a baseline from scratch under fixed gating.
    Baseline {
        kind: Baseline,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a checkpoint.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        /// Pick the most likely action and gate instead of sampling.
        #[arg(long)]
        greedy: bool,
        /// Also write a per-step trajectory dump.
        #[arg(long)]
        record: bool,
    },
    /// Post-process metric files and trajectory dumps.
    #[command(subcommand)]
    Analyze(Analyze),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Channel bandwidth in bits per second.
    #[arg(long, allow_hyphen_values = true)]
    bandwidth: Option<f64>,
    /// Training steps.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, value_enum)]
    ablation: Option<Ablation>,
}

impl RunArgs {
    fn resolve(&self) -> AppResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(b) = self.bandwidth {
            cfg.budget.bandwidth = Some(b);
        }
        if let Some(steps) = self.steps {
            cfg.training.total_steps = steps;
        }
        if self.ablation.is_some() {
            cfg.ablation = self.ablation;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct BudgetArgs {
    /// Start from this configuration's budget section.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    bandwidth: Option<f64>,
    #[arg(long)]
    levels: Option<u32>,
    #[arg(long)]
    msg_len: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    freq: Option<f64>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    sigma2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// Print JSON instead of the table.
    #[arg(long)]
    json: bool,
    /// Also write `budget.json` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Analyze {
    /// Learning curves from metric CSVs (files or run directories).
    Curves {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Metric columns to plot.
        #[arg(long = "key", default_values = ["eval_mean_steps", "mean_penalty_per_step"])]
        keys: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-step gate table from a trajectory dump.
    Timeline {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-dimensional PCA of one agent's observations.
    Pca {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value_t = 0)]
        agent: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn budget_table(b: &BandwidthBudget) -> String {
    let i = &b.inputs;
    let rows = [
        ("bandwidth B (bit/s)", format!("{}", i.bandwidth)),
        ("signal levels K", format!("{}", i.levels)),
        ("message length L", format!("{}", i.msg_len)),
        ("frequency F (Hz)", format!("{}", i.freq)),
        ("agents N", format!("{}", i.agents)),
        ("sigma^2", format!("{}", i.sigma2)),
        ("gamma", format!("{}", i.gamma)),
        ("entropy bound H (nats)", format!("{:.6}", b.entropy_bound)),
        ("max bit rate (bit/s)", format!("{:.6}", b.max_bit_rate)),
        ("n_max (symbols/s)", format!("{:.6}", b.n_max)),
        ("full rate (symbols/s)", format!("{:.6}", b.full_rate)),
        ("p_sup", format!("{:.6}", b.p_sup)),
        ("C_sup", format!("{:.6}", b.c_sup)),
    ];
    let mut s = String::new();
    for (k, v) in rows {
        s.push_str(&format!("{k:<24} {v:>14}\n"));
    }
    if b.degenerate {
        s.push_str("warning: entropy bound is not positive; p_sup forced to 1\n");
    }
    s
}

fn budget(args: &BudgetArgs) -> AppResult<()> {
    let cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let mut inputs = cfg.budget_inputs(cfg.fixed_sigma2().unwrap_or_else(|| reference_sigma2(cfg.task)));
    if let Some(v) = args.bandwidth {
        inputs.bandwidth = v;
    }
    if let Some(v) = args.levels {
        inputs.levels = v;
    }
    if let Some(v) = args.msg_len {
        inputs.msg_len = v;
    }
    if let Some(v) = args.freq {
        inputs.freq = v;
    }
    if let Some(v) = args.agents {
        inputs.agents = v;
    }
    if let Some(v) = args.sigma2 {
        inputs.sigma2 = v;
    }
    if let Some(v) = args.gamma {
        inputs.gamma = v;
    }
    let b = inputs.derive().map_err(|e| match e {
        etcomm_core::Error::InvalidParameter { name, reason } => AppError::Config {
            key: name.to_string(),
            reason: reason.to_string(),
        },
        other => other.into(),
    })?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&b).expect("budget serializes"));
    } else {
        print!("{}", budget_table(&b));
    }
    if let Some(out) = &args.out {
        write_json(&out.join("budget.json"), &b)?;
    }
    Ok(())
}

fn print_runs(runs: &[run::SeedRun]) {
    for r in runs {
        let s = &r.summary;
        println!(
            "seed {:>3}  steps {:7.2} ± {:6.2}  send {:.4}  p_sup {:.4}  {}",
            s.seed,
            s.eval.mean_steps,
            s.eval.std_steps,
            s.eval.sending_probability,
            s.budget.p_sup,
            r.dir.display()
        );
    }
}

fn metrics_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("metrics.csv")
    } else {
        p.to_path_buf()
    }
}

fn analyze(cmd: &Analyze) -> AppResult<()> {
    match cmd {
        Analyze::Curves { runs, keys, out } => {
            let tables = runs
                .iter()
                .map(|p| Table::read(&metrics_path(p), &p.display().to_string()))
                .collect::<AppResult<Vec<_>>>()?;
            fs::create_dir_all(out).map_err(|e| AppError::io(out, e))?;
            for key in keys {
                let curves = render_curves(&tables, key)?;
                for (ext, body) in [("svg", &curves.svg), ("csv", &curves.merged_csv)] {
                    let path = out.join(format!("{key}.{ext}"));
                    fs::write(&path, body).map_err(|e| AppError::io(&path, e))?;
                }
                println!("{}", out.join(format!("{key}.svg")).display());
            }
        }
        Analyze::Timeline { trajectory, out } => {
            let steps: Vec<TrajectoryStep> = read_jsonl(trajectory)?;
            let rows = gating_timeline(&steps);
            write_csv(&out.join("timeline.csv"), &rows)?;
            let counts = trigger_counts(&rows);
            write_json(&out.join("trigger_counts.json"), &counts)?;
            println!("triggers per agent: {counts:?}");
        }
        Analyze::Pca { trajectory, agent, out } => {
            let steps: Vec<TrajectoryStep> = read_jsonl(trajectory)?;
            let (pca, points) = pca_points(&steps, *agent)?;
            write_csv(&out.join("pca.csv"), &points)?;
            write_json(&out.join("pca.json"), &pca)?;
            println!("explained variance: {:.6} {:.6}", pca.explained[0], pca.explained[1]);
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Budget(args) => budget(&args),
        Command::TrainStage1(args) => {
            let cfg = args.resolve()?;
            print_runs(&run::train_stage1(&cfg, &args.out)?);
            Ok(())
        }
        Command::TrainStage2 { run: args, init } => {
            let cfg = args.resolve()?;
            print_runs(&run::train_stage2(&cfg, &args.out, &init)?);
            Ok(())
        }
        Command::Baseline { kind, run: args } => {
            let cfg = args.resolve()?;
            print_runs(&run::train_baseline(&cfg, &args.out, kind)?);
            Ok(())
        }
        Command::Eval {
            run: args,
            checkpoint,
            episodes,
            greedy,
            record,
        } => {
            let mut cfg = args.resolve()?;
            if let Some(e) = episodes {
                cfg.eval.episodes = e;
            }
            cfg.eval.greedy |= greedy;
            let ev = run::evaluate_checkpoint(&cfg, &checkpoint, &args.out, record)?;
            let r = &ev.report;
            println!(
                "{} episodes  steps {:.2} ± {:.2}  send {:.4}  triggers {:?}",
                r.episodes, r.mean_steps, r.std_steps, r.sending_probability, r.triggers_per_agent
            );
            Ok(())
        }
        Command::Analyze(cmd) => analyze(&cmd),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
