//! Event-triggered message delivery.
//!
//! Each agent keeps the times at which its gate opened ([`TriggerSet`]), the
//! message it sent at the latest of those times (sender-side zero-order hold)
//! and, for every other agent, the most recent message received from it
//! (receiver board). Gate decisions for a step are taken against the state
//! left by the previous step and committed together by [`CommState::commit`].

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Strictly increasing trigger times of one agent within an episode.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TriggerSet {
    times: Vec<u64>,
}

impl TriggerSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_times(times: Vec<u64>) -> Result<Self> {
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter {
                name: "trigger times",
                reason: "must be strictly increasing",
            });
        }
        Ok(TriggerSet { times })
    }

    pub fn push(&mut self, t: u64) -> Result<()> {
        if self.times.last().is_some_and(|&last| last >= t) {
            return Err(Error::InvalidParameter {
                name: "trigger time",
                reason: "must exceed the previous trigger",
            });
        }
        self.times.push(t);
        Ok(())
    }

    pub fn times(&self) -> &[u64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn clear(&mut self) {
        self.times.clear();
    }
}

/// Largest trigger time `<= t`.
pub fn latest_trigger(set: &TriggerSet, t: u64) -> Result<u64> {
    let idx = set.times.partition_point(|&k| k <= t);
    if idx == 0 {
        Err(Error::NoTriggerYet)
    } else {
        Ok(set.times[idx - 1])
    }
}

/// What a receiver uses for a sender that did not transmit this step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "kebab-case")
)]
pub enum ReceiverMode {
    /// Hold the last received message.
    #[default]
    Zoh,
    /// Substitute a zero vector.
    ZeroPad,
}

/// What the gating network sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "kebab-case")
)]
pub enum GateInput {
    /// Current message and the message at the agent's latest trigger.
    #[default]
    WithMemory,
    /// Current message only.
    CurrentOnly,
}

/// Per-episode communication state for all agents.
#[derive(Debug, Clone)]
pub struct CommState {
    n_agents: usize,
    msg_len: usize,
    mode: ReceiverMode,
    triggers: Vec<TriggerSet>,
    /// Sender memory `m_{i, t̂}`; `None` until the first trigger.
    memories: Vec<Option<Vec<f64>>>,
    /// `boards[i][j]`: what receiver `i` holds for sender `j` (`j != i`).
    boards: Vec<Vec<Vec<f64>>>,
    /// `fresh[i][j]`: the slot was delivered at the current step.
    fresh: Vec<Vec<bool>>,
}

impl CommState {
    pub fn new(n_agents: usize, msg_len: usize, mode: ReceiverMode) -> Self {
        CommState {
            n_agents,
            msg_len,
            mode,
            triggers: vec![TriggerSet::new(); n_agents],
            memories: vec![None; n_agents],
            boards: vec![vec![vec![0.0; msg_len]; n_agents]; n_agents],
            fresh: vec![vec![false; n_agents]; n_agents],
        }
    }

    /// Clears everything for a new episode.
    pub fn reset(&mut self) {
        *self = CommState::new(self.n_agents, self.msg_len, self.mode);
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn mode(&self) -> ReceiverMode {
        self.mode
    }

    pub fn triggers(&self, agent: usize) -> &TriggerSet {
        &self.triggers[agent]
    }

    pub fn memory(&self, agent: usize) -> Option<&[f64]> {
        self.memories[agent].as_deref()
    }

    /// Slot of sender `j` on receiver `i`'s board.
    pub fn slot(&self, receiver: usize, sender: usize) -> &[f64] {
        &self.boards[receiver][sender]
    }

    /// Whether receiver `i`'s slot for sender `j` was written at the current step.
    pub fn is_fresh(&self, receiver: usize, sender: usize) -> bool {
        self.fresh[receiver][sender]
    }

    /// `m̃_{-i}`: the other agents' slots in ascending sender order.
    pub fn received(&self, receiver: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.n_agents - 1) * self.msg_len);
        for j in (0..self.n_agents).filter(|&j| j != receiver) {
            out.extend_from_slice(&self.boards[receiver][j]);
        }
        out
    }

    /// Gating-network input for agent `i`.
    pub fn gate_inputs(&self, agent: usize, current: &[f64], input: GateInput) -> Result<Vec<f64>> {
        match input {
            GateInput::CurrentOnly => Ok(current.to_vec()),
            GateInput::WithMemory => {
                let memory = self.memories[agent]
                    .as_ref()
                    .ok_or(Error::InvalidMemory { agent })?;
                let mut v = Vec::with_capacity(2 * self.msg_len);
                v.extend_from_slice(current);
                v.extend_from_slice(memory);
                Ok(v)
            }
        }
    }

    /// Applies one step's gate decisions atomically.
    pub fn commit(&mut self, t: u64, gates: &[u8], messages: &[Vec<f64>]) -> Result<()> {
        if gates.len() != self.n_agents || messages.len() != self.n_agents {
            return Err(Error::InvalidParameter {
                name: "gates/messages",
                reason: "need one entry per agent",
            });
        }
        if let Some(m) = messages.iter().find(|m| m.len() != self.msg_len) {
            return Err(Error::Dimension {
                what: "message",
                layer: 0,
                expected: self.msg_len,
                got: m.len(),
            });
        }
        for row in &mut self.fresh {
            row.iter_mut().for_each(|f| *f = false);
        }
        if self.mode == ReceiverMode::ZeroPad {
            for board in &mut self.boards {
                for slot in board {
                    slot.iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        for (i, (&g, m)) in gates.iter().zip(messages).enumerate() {
            if g == 0 {
                continue;
            }
            self.triggers[i].push(t)?;
            self.memories[i] = Some(m.clone());
            for k in (0..self.n_agents).filter(|&k| k != i) {
                self.boards[k][i].copy_from_slice(m);
                self.fresh[k][i] = true;
            }
        }
        Ok(())
    }
}
