//! Stepping agents, channel and environment together.

use alloc::vec::Vec;

use crate::agents::{AgentBundle, GateDecision, GatingMode};
use crate::comms::{CommState, GateInput, ReceiverMode};
use crate::envs::{AgentInfo, EnvSpec, MultiAgentEnv, Snapshot, TaskEnv};
use crate::{Error, Result, Rng};

/// Gating mode and channel semantics for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunSettings {
    pub gating: GatingMode,
    pub receiver: ReceiverMode,
    pub gate_input: GateInput,
}

impl RunSettings {
    pub fn full() -> Self {
        RunSettings {
            gating: GatingMode::Full,
            receiver: ReceiverMode::Zoh,
            gate_input: GateInput::WithMemory,
        }
    }

    /// Event-triggered communication with held messages.
    pub fn learned() -> Self {
        RunSettings {
            gating: GatingMode::Learned,
            ..RunSettings::full()
        }
    }

    /// Receivers see zeros from silent senders.
    pub fn never() -> Self {
        RunSettings {
            gating: GatingMode::Never,
            receiver: ReceiverMode::ZeroPad,
            gate_input: GateInput::WithMemory,
        }
    }

    pub fn dropout(p: f64) -> Self {
        RunSettings {
            gating: GatingMode::Dropout { p },
            ..RunSettings::never()
        }
    }
}

/// Everything that happened during one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Step index within the episode.
    pub t: u64,
    /// Global step index of the run.
    pub step: u64,
    /// Parameter version the step was generated with.
    pub version: u64,
    pub state: Snapshot,
    pub observations: Vec<Vec<f64>>,
    pub messages: Vec<Vec<f64>>,
    /// Gate-network input per agent; empty when the gate was not sampled.
    pub gate_inputs: Vec<Vec<f64>>,
    pub gates: Vec<u8>,
    pub open_probability: Vec<f64>,
    /// The gate came from the gating network.
    pub sampled: Vec<bool>,
    /// Messages the actor saw, other agents in ascending order.
    pub received: Vec<Vec<f64>>,
    /// `fresh[i][k]`: receiver `i`'s `k`-th slot was written this step.
    pub fresh: Vec<Vec<bool>>,
    pub action_probs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub lambda: f64,
    pub next_observations: Vec<Vec<f64>>,
    pub done: bool,
    pub info: Vec<AgentInfo>,
}

impl Transition {
    pub fn n_agents(&self) -> usize {
        self.gates.len()
    }

    pub fn sends(&self) -> u64 {
        self.gates.iter().map(|&g| g as u64).sum()
    }
}

/// Runs episodes back to back, resetting automatically after each one.
#[derive(Debug, Clone)]
pub struct EpisodeRunner {
    env: TaskEnv,
    comm: CommState,
    settings: RunSettings,
    observations: Vec<Vec<f64>>,
    t: u64,
    step: u64,
    episodes: u64,
}

impl EpisodeRunner {
    pub fn new(spec: &EnvSpec, settings: RunSettings, seed: u64) -> Result<Self> {
        settings.gating.validate()?;
        let mut env = spec.build(seed)?;
        let task = spec.task();
        let observations = env.reset();
        Ok(EpisodeRunner {
            env,
            comm: CommState::new(task.n_agents, task.msg_len, settings.receiver),
            settings,
            observations,
            t: 0,
            step: 0,
            episodes: 0,
        })
    }

    pub fn settings(&self) -> RunSettings {
        self.settings
    }

    pub fn set_gating(&mut self, gating: GatingMode) -> Result<()> {
        gating.validate()?;
        self.settings.gating = gating;
        Ok(())
    }

    /// Completed episodes.
    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn comm(&self) -> &CommState {
        &self.comm
    }

    /// Abandons the current episode and starts a new one.
    pub fn restart(&mut self) {
        self.observations = self.env.reset();
        self.comm.reset();
        self.t = 0;
    }

    /// Plays one step. The first step of every episode always sends, so that
    /// every receiver and the gate memory are initialized.
    pub fn step(
        &mut self,
        agents: &AgentBundle,
        rng: &mut Rng,
        greedy: bool,
        lambda: f64,
        version: u64,
    ) -> Result<Transition> {
        let n = self.comm.n_agents();
        let state = self.env.snapshot();
        let observations = core::mem::take(&mut self.observations);
        let messages = observations
            .iter()
            .map(|o| agents.encode(o))
            .collect::<Result<Vec<_>>>()?;

        let mut decisions = Vec::with_capacity(n);
        let mut gate_inputs = Vec::with_capacity(n);
        for (i, m) in messages.iter().enumerate() {
            if self.t == 0 {
                decisions.push(GateDecision {
                    open_probability: 1.0,
                    gate: 1,
                    sampled: false,
                });
                gate_inputs.push(Vec::new());
                continue;
            }
            let input = match self.settings.gating {
                GatingMode::Learned => self.comm.gate_inputs(i, m, self.settings.gate_input)?,
                _ => Vec::new(),
            };
            decisions.push(agents.gate(self.settings.gating, &input, greedy, rng)?);
            gate_inputs.push(input);
        }
        let gates: Vec<u8> = decisions.iter().map(|d| d.gate).collect();
        self.comm.commit(self.t, &gates, &messages)?;

        let mut received = Vec::with_capacity(n);
        let mut fresh = Vec::with_capacity(n);
        let mut action_probs = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        for (i, o) in observations.iter().enumerate() {
            let r = self.comm.received(i);
            let (probs, a) = agents.act(o, &r, greedy, rng)?;
            received.push(r);
            fresh.push(
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| self.comm.is_fresh(i, j))
                    .collect(),
            );
            action_probs.push(probs);
            actions.push(a);
        }

        let outcome = self.env.step(&actions)?;
        let transition = Transition {
            t: self.t,
            step: self.step,
            version,
            state,
            observations,
            messages,
            gate_inputs,
            gates,
            open_probability: decisions.iter().map(|d| d.open_probability).collect(),
            sampled: decisions.iter().map(|d| d.sampled).collect(),
            received,
            fresh,
            action_probs,
            actions,
            rewards: outcome.rewards,
            lambda,
            next_observations: outcome.observations.clone(),
            done: outcome.done,
            info: outcome.info,
        };

        self.step += 1;
        if outcome.done {
            self.episodes += 1;
            self.restart();
        } else {
            self.observations = outcome.observations;
            self.t += 1;
        }
        Ok(transition)
    }
}

/// Checks that a segment was generated with the current parameters.
pub fn check_version(segment: &[Transition], version: u64) -> Result<()> {
    match segment.iter().find(|tr| tr.version != version) {
        Some(tr) => Err(Error::StaleRollout {
            expected: version,
            got: tr.version,
        }),
        None => Ok(()),
    }
}

/// Sends per agent and step over a set of transitions.
pub fn send_counts(segment: &[Transition]) -> (u64, u64) {
    let sends = segment.iter().map(Transition::sends).sum();
    let slots = segment.iter().map(|tr| tr.n_agents() as u64).sum();
    (sends, slots)
}
