//! Checkpoints: one JSON file per network plus a manifest.
//!
//! ```text
//! checkpoint/
//!   manifest.json
//!   encoder.json  actor.json  gate.json
//!   critic.json   lagrangian.json  penalty.json
//! ```
//!
//! A network file records the layer sizes and activations, every layer's
//! row-major `(outputs × inputs)` weights and biases, and the Adam moments
//! and step counter. Loading rejects files whose arrays disagree with the
//! declared sizes, and bundles whose shapes do not fit the task.

use std::fs;
use std::path::Path;

use etcomm_core::agents::{architecture, AgentBundle, TaskSpec, ValueBundle};
use etcomm_core::nn::{Activation, AdamState, Gradient, Layer, LayerGrad, Mlp};
use etcomm_core::training::RunSettings;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::io::{read_json, write_json};

pub const NETWORK_FORMAT: &str = "etcomm-mlp/1";
pub const MANIFEST_FORMAT: &str = "etcomm-checkpoint/1";
pub const NETWORK_NAMES: [&str; 6] = ["encoder", "actor", "gate", "critic", "lagrangian", "penalty"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamFile {
    pub step: u64,
    pub m: Vec<LayerParams>,
    pub v: Vec<LayerParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub format: String,
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub layers: Vec<LayerParams>,
    pub adam: AdamFile,
}

fn grad_params(g: &Gradient) -> Vec<LayerParams> {
    g.layers
        .iter()
        .map(|l| LayerParams {
            weights: l.weights.clone(),
            biases: l.biases.clone(),
        })
        .collect()
}

fn params_grad(p: &[LayerParams]) -> Gradient {
    Gradient {
        layers: p
            .iter()
            .map(|l| LayerGrad {
                weights: l.weights.clone(),
                biases: l.biases.clone(),
            })
            .collect(),
    }
}

impl NetworkFile {
    pub fn from_mlp(net: &Mlp) -> Self {
        NetworkFile {
            format: NETWORK_FORMAT.to_string(),
            layer_sizes: net.layer_sizes(),
            activations: net.activations(),
            layers: net
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: l.weights.clone(),
                    biases: l.biases.clone(),
                })
                .collect(),
            adam: AdamFile {
                step: net.adam.step,
                m: grad_params(&net.adam.m),
                v: grad_params(&net.adam.v),
            },
        }
    }

    pub fn into_mlp(self) -> AppResult<Mlp> {
        if self.format != NETWORK_FORMAT {
            return Err(AppError::Checkpoint(format!(
                "unsupported network format {:?}",
                self.format
            )));
        }
        let n = self.activations.len();
        if self.layer_sizes.len() != n + 1 || self.layers.len() != n {
            return Err(AppError::Checkpoint(format!(
                "{} layer sizes, {} activations and {} layers do not describe one network",
                self.layer_sizes.len(),
                n,
                self.layers.len()
            )));
        }
        if self.adam.m.len() != n || self.adam.v.len() != n {
            return Err(AppError::Checkpoint("adam moments do not match the layer count".into()));
        }
        let layers = self
            .layers
            .into_iter()
            .enumerate()
            .map(|(k, p)| Layer {
                inputs: self.layer_sizes[k],
                outputs: self.layer_sizes[k + 1],
                activation: self.activations[k],
                weights: p.weights,
                biases: p.biases,
            })
            .collect();
        let net = Mlp {
            layers,
            adam: AdamState {
                step: self.adam.step,
                m: params_grad(&self.adam.m),
                v: params_grad(&self.adam.v),
            },
        };
        net.validate().map_err(|e| AppError::Checkpoint(e.to_string()))?;
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub task: TaskSpec,
    /// Gating mode and channel semantics the networks were trained under.
    pub settings: RunSettings,
    /// Which training produced the checkpoint (`stage1`, `stage2`, `baseline-none`, ...).
    pub stage: String,
    pub seed: u64,
    /// Message variance measured while training, if any.
    pub sigma2: Option<f64>,
    pub networks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub agents: AgentBundle,
    pub values: ValueBundle,
}

impl Checkpoint {
    pub fn nets(&self) -> [(&'static str, &Mlp); 6] {
        [
            ("encoder", &self.agents.encoder),
            ("actor", &self.agents.actor),
            ("gate", &self.agents.gate),
            ("critic", &self.values.critic),
            ("lagrangian", &self.values.lagrangian),
            ("penalty", &self.values.penalty),
        ]
    }

    pub fn save(&self, dir: &Path) -> AppResult<()> {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        for (name, net) in self.nets() {
            write_json(&dir.join(format!("{name}.json")), &NetworkFile::from_mlp(net))?;
        }
        write_json(&dir.join("manifest.json"), &self.manifest)
    }

    /// Loads and checks every network against the manifest's task.
    pub fn load(dir: &Path) -> AppResult<Self> {
        let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(AppError::Checkpoint(format!(
                "unsupported manifest format {:?}",
                manifest.format
            )));
        }
        let load = |name: &str| -> AppResult<Mlp> {
            let path = dir.join(format!("{name}.json"));
            let file: NetworkFile = read_json(&path)?;
            file.into_mlp()
                .map_err(|e| AppError::Checkpoint(format!("{}: {e}", path.display())))
        };
        let agents = AgentBundle {
            encoder: load("encoder")?,
            actor: load("actor")?,
            gate: load("gate")?,
        };
        let values = ValueBundle {
            critic: load("critic")?,
            lagrangian: load("lagrangian")?,
            penalty: load("penalty")?,
        };
        let arch = architecture(&manifest.task, manifest.settings.gate_input);
        agents.check(&arch)?;
        values.check(&arch)?;
        Ok(Checkpoint {
            manifest,
            agents,
            values,
        })
    }

    /// Fails unless the checkpoint was built for `task`.
    pub fn expect_task(&self, task: &TaskSpec) -> AppResult<()> {
        if &self.manifest.task != task {
            return Err(AppError::Core(etcomm_core::Error::TaskMismatch(format!(
                "checkpoint is for {:?}, configuration is for {:?}",
                self.manifest.task, task
            ))));
        }
        Ok(())
    }
}

pub fn manifest(task: TaskSpec, settings: RunSettings, stage: &str, seed: u64, sigma2: Option<f64>) -> Manifest {
    Manifest {
        format: MANIFEST_FORMAT.to_string(),
        task,
        settings,
        stage: stage.to_string(),
        seed,
        sigma2,
        networks: NETWORK_NAMES.iter().map(|s| s.to_string()).collect(),
    }
}
