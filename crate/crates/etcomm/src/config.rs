//! Experiment configuration (TOML).
//!
//! Every section and key is optional; missing values take the documented
//! defaults and unknown keys are rejected. A minimal navigation config is an
//! empty file.
//!
//! ```toml
//! task = "nav"            # or "predator-prey"
//! seeds = [0, 1, 2]
//!
//! [nav]
//! grid_size = 10
//! p_move = 0.1
//!
//! [training]
//! total_steps = 200000
//!
//! [budget]
//! bandwidth = 170.0       # bits per second
//! sigma2 = "measured"     # or a fixed variance, e.g. 0.69
//! ```

use std::path::Path;

use etcomm_core::agents::{TaskKind, TaskSpec};
use etcomm_core::bandwidth::BudgetInputs;
use etcomm_core::comms::{GateInput, ReceiverMode};
use etcomm_core::envs::{EnvSpec, NavConfig, PredatorPreyConfig};
use etcomm_core::eval::EvalOptions;
use etcomm_core::training::{RunSettings, TrainingConfig};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Silent senders deliver zeros instead of holding their last message.
    ZohPad,
    /// The gate sees only the current message.
    GateNoMemory,
}

/// Variance used by the bandwidth budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sigma2Setting {
    Fixed(f64),
    Keyword(Sigma2Keyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sigma2Keyword {
    /// Measured from stage-1 messages and tracked during stage 2.
    Measured,
}

impl Default for Sigma2Setting {
    fn default() -> Self {
        Sigma2Setting::Keyword(Sigma2Keyword::Measured)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    /// Bits per second; defaults to 170 (navigation) or 580 (predator–prey).
    pub bandwidth: Option<f64>,
    pub levels: u32,
    pub freq: f64,
    pub sigma2: Sigma2Setting,
    /// Dropout baseline sending probability.
    pub dropout_p: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            bandwidth: None,
            levels: 2,
            freq: 45.0,
            sigma2: Sigma2Setting::default(),
            dropout_p: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub greedy: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 1000,
            greedy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub seeds: Vec<u64>,
    pub ablation: Option<Ablation>,
    pub nav: NavConfig,
    pub predator_prey: PredatorPreyConfig,
    pub training: TrainingConfig,
    pub budget: BudgetConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: TaskKind::Nav,
            seeds: vec![0],
            ablation: None,
            nav: NavConfig::default(),
            predator_prey: PredatorPreyConfig::default(),
            training: TrainingConfig::default(),
            budget: BudgetConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Variance assumed before any message has been measured.
pub fn reference_sigma2(task: TaskKind) -> f64 {
    match task {
        TaskKind::Nav => 0.69,
        TaskKind::PredatorPrey => 0.330,
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> AppError {
    AppError::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> AppResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| AppError::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// The fully resolved configuration, defaults included.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> AppResult<()> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "need at least one seed"));
        }
        if let Some(b) = self.budget.bandwidth {
            if !(b > 0.0) {
                return Err(invalid("budget.bandwidth", "must be > 0"));
            }
        }
        if self.budget.levels < 2 {
            return Err(invalid("budget.levels", "need at least 2 signal levels"));
        }
        if !(self.budget.freq > 0.0 && self.budget.freq.is_finite()) {
            return Err(invalid("budget.freq", "must be finite and > 0"));
        }
        if let Sigma2Setting::Fixed(v) = self.budget.sigma2 {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid("budget.sigma2", "must be \"measured\" or a finite value > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.budget.dropout_p) {
            return Err(invalid("budget.dropout_p", "must lie in [0, 1]"));
        }
        if self.eval.episodes == 0 {
            return Err(invalid("eval.episodes", "must be >= 1"));
        }
        self.training
            .validate()
            .map_err(|e| core_invalid("training", e))?;
        self.env_spec().build(0).map_err(|e| core_invalid(self.task_section(), e))?;
        Ok(())
    }

    fn task_section(&self) -> &'static str {
        match self.task {
            TaskKind::Nav => "nav",
            TaskKind::PredatorPrey => "predator_prey",
        }
    }

    pub fn env_spec(&self) -> EnvSpec {
        match self.task {
            TaskKind::Nav => EnvSpec::Nav(self.nav),
            TaskKind::PredatorPrey => EnvSpec::PredatorPrey(self.predator_prey),
        }
    }

    pub fn task_spec(&self) -> TaskSpec {
        self.env_spec().task()
    }

    pub fn bandwidth(&self) -> f64 {
        self.budget.bandwidth.unwrap_or(match self.task {
            TaskKind::Nav => 170.0,
            TaskKind::PredatorPrey => 580.0,
        })
    }

    /// Budget inputs with the given variance.
    pub fn budget_inputs(&self, sigma2: f64) -> BudgetInputs {
        let task = self.task_spec();
        BudgetInputs {
            bandwidth: self.bandwidth(),
            levels: self.budget.levels,
            msg_len: task.msg_len,
            freq: self.budget.freq,
            agents: task.n_agents,
            sigma2,
            gamma: self.training.gamma,
        }
    }

    /// The configured fixed variance, if any.
    pub fn fixed_sigma2(&self) -> Option<f64> {
        match self.budget.sigma2 {
            Sigma2Setting::Fixed(v) => Some(v),
            Sigma2Setting::Keyword(Sigma2Keyword::Measured) => None,
        }
    }

    pub fn gate_input(&self) -> GateInput {
        match self.ablation {
            Some(Ablation::GateNoMemory) => GateInput::CurrentOnly,
            _ => GateInput::WithMemory,
        }
    }

    /// Channel settings for the event-triggered method.
    pub fn learned_settings(&self) -> RunSettings {
        RunSettings {
            receiver: match self.ablation {
                Some(Ablation::ZohPad) => ReceiverMode::ZeroPad,
                _ => ReceiverMode::Zoh,
            },
            gate_input: self.gate_input(),
            ..RunSettings::learned()
        }
    }

    pub fn full_settings(&self) -> RunSettings {
        RunSettings {
            gate_input: self.gate_input(),
            ..RunSettings::full()
        }
    }

    pub fn eval_options(&self, record: bool) -> EvalOptions {
        EvalOptions {
            episodes: self.eval.episodes,
            greedy: self.eval.greedy,
            record,
        }
    }
}

fn core_invalid(section: &str, e: etcomm_core::Error) -> AppError {
    match e {
        etcomm_core::Error::InvalidParameter { name, reason } => invalid(&format!("{section}.{name}"), reason),
        other => invalid(section, other.to_string()),
    }
}
