//! Network bundles shared by all homogeneous agents of a task.
//!
//! | network    | navigation   | predator–prey (N predators)   | activations           |
//! |------------|--------------|-------------------------------|-----------------------|
//! | encoder    | 6-20-6       | 52-40-15                      | relu, tanh            |
//! | actor      | 12-40-40-5   | (52+15(N-1))-80-40-5          | relu, relu, softmax   |
//! | gate       | 12-40-40-2   | 30-80-80-2                    | relu, relu, softmax   |
//! | critic     | 12-40-40-1   | 52N-120-80-1                  | relu, relu, none      |
//! | lagrangian | 12-60-60-1   | 52N-120-80-1                  | relu, relu, none      |
//! | penalty    | 12-60-60-1   | 52N-60-40-1                   | relu, relu, none      |
//!
//! The gate sees the current message and the memorized one (`2L` inputs), or
//! only the current message (`L`) in the no-memory ablation. The value heads
//! see `υ_i = [o_i, o_{-i}]`, the agent's own observation first.

use alloc::vec::Vec;

use crate::comms::GateInput;
use crate::envs::{NAV_OBS_DIM, N_ACTIONS, PP_OBS_DIM};
use crate::nn::{self, Activation, Mlp};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "kebab-case")
)]
pub enum TaskKind {
    Nav,
    PredatorPrey,
}

/// Dimensions that fix every network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub n_agents: usize,
    pub obs_dim: usize,
    pub msg_len: usize,
}

impl TaskSpec {
    pub fn nav() -> Self {
        TaskSpec {
            kind: TaskKind::Nav,
            n_agents: 2,
            obs_dim: NAV_OBS_DIM,
            msg_len: 6,
        }
    }

    pub fn predator_prey(n_agents: usize) -> Self {
        TaskSpec {
            kind: TaskKind::PredatorPrey,
            n_agents,
            obs_dim: PP_OBS_DIM,
            msg_len: 15,
        }
    }

    pub fn upsilon_len(&self) -> usize {
        self.n_agents * self.obs_dim
    }

    pub fn actor_input_len(&self) -> usize {
        self.obs_dim + (self.n_agents - 1) * self.msg_len
    }

    pub fn gate_input_len(&self, input: GateInput) -> usize {
        match input {
            GateInput::WithMemory => 2 * self.msg_len,
            GateInput::CurrentOnly => self.msg_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetShape {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl NetShape {
    fn new(sizes: &[usize], activations: &[Activation]) -> Self {
        NetShape {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
        }
    }

    pub fn build<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<Mlp> {
        Mlp::new(&self.sizes, &self.activations, rng)
    }

    pub fn zeros(&self) -> Result<Mlp> {
        Mlp::zeros(&self.sizes, &self.activations)
    }

    pub fn matches(&self, net: &Mlp) -> bool {
        net.layer_sizes() == self.sizes && net.activations() == self.activations
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub encoder: NetShape,
    pub actor: NetShape,
    pub gate: NetShape,
    pub critic: NetShape,
    pub lagrangian: NetShape,
    pub penalty: NetShape,
}

pub fn architecture(task: &TaskSpec, gate_input: GateInput) -> Architecture {
    use Activation::*;
    let (enc_hidden, actor_hidden, gate_hidden, critic_hidden, lagr_hidden, pen_hidden) =
        match task.kind {
            TaskKind::Nav => ([20], [40, 40], [40, 40], [40, 40], [60, 60], [60, 60]),
            TaskKind::PredatorPrey => ([40], [80, 40], [80, 80], [120, 80], [120, 80], [60, 40]),
        };
    let chain = |input: usize, hidden: [usize; 2], output: usize| [input, hidden[0], hidden[1], output];
    let ups = task.upsilon_len();
    Architecture {
        encoder: NetShape::new(&[task.obs_dim, enc_hidden[0], task.msg_len], &[Relu, Tanh]),
        actor: NetShape::new(
            &chain(task.actor_input_len(), actor_hidden, N_ACTIONS),
            &[Relu, Relu, Softmax],
        ),
        gate: NetShape::new(
            &chain(task.gate_input_len(gate_input), gate_hidden, 2),
            &[Relu, Relu, Softmax],
        ),
        critic: NetShape::new(&chain(ups, critic_hidden, 1), &[Relu, Relu, Linear]),
        lagrangian: NetShape::new(&chain(ups, lagr_hidden, 1), &[Relu, Relu, Linear]),
        penalty: NetShape::new(&chain(ups, pen_hidden, 1), &[Relu, Relu, Linear]),
    }
}

/// Encoder, actor and gate, shared by every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBundle {
    pub encoder: Mlp,
    pub actor: Mlp,
    pub gate: Mlp,
}

/// Centralized value heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueBundle {
    pub critic: Mlp,
    pub lagrangian: Mlp,
    pub penalty: Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueHead {
    Critic,
    Lagrangian,
    Penalty,
}

/// How gate decisions are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "kebab-case")
)]
pub enum GatingMode {
    /// Always send.
    Full,
    /// Never send (apart from the forced first step).
    Never,
    /// Send with a fixed probability, independent of inputs.
    Dropout { p: f64 },
    /// Sample the gating network.
    Learned,
}

impl GatingMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            GatingMode::Dropout { p } if !(0.0..=1.0).contains(p) => Err(Error::InvalidParameter {
                name: "dropout probability",
                reason: "must lie in [0, 1]",
            }),
            _ => Ok(()),
        }
    }
}

/// Outcome of one gate decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    pub open_probability: f64,
    pub gate: u8,
    /// The gate came from the gating network (and so carries a policy gradient).
    pub sampled: bool,
}

/// Input-independent gate decision for the baseline modes.
pub fn baseline_gate<R: rand::Rng + ?Sized>(mode: GatingMode, rng: &mut R) -> Option<GateDecision> {
    let fixed = |p: f64, gate: u8| GateDecision {
        open_probability: p,
        gate,
        sampled: false,
    };
    match mode {
        GatingMode::Full => Some(fixed(1.0, 1)),
        GatingMode::Never => Some(fixed(0.0, 0)),
        GatingMode::Dropout { p } => Some(fixed(p, u8::from(rng.gen::<f64>() < p))),
        GatingMode::Learned => None,
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            layer: 0,
            expected,
            got,
        })
    }
}

impl AgentBundle {
    pub fn new<R: rand::Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        Ok(AgentBundle {
            encoder: arch.encoder.build(rng)?,
            actor: arch.actor.build(rng)?,
            gate: arch.gate.build(rng)?,
        })
    }

    pub fn zeros(arch: &Architecture) -> Result<Self> {
        Ok(AgentBundle {
            encoder: arch.encoder.zeros()?,
            actor: arch.actor.zeros()?,
            gate: arch.gate.zeros()?,
        })
    }

    pub fn check(&self, arch: &Architecture) -> Result<()> {
        for (name, shape, net) in [
            ("encoder", &arch.encoder, &self.encoder),
            ("actor", &arch.actor, &self.actor),
            ("gate", &arch.gate, &self.gate),
        ] {
            if !shape.matches(net) {
                return Err(Error::TaskMismatch(alloc::format!(
                    "{name} is {:?}, task needs {:?}",
                    net.layer_sizes(),
                    shape.sizes
                )));
            }
        }
        Ok(())
    }

    /// `m = e(o)`.
    pub fn encode(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.encoder.forward(obs)
    }

    pub fn actor_input(obs: &[f64], received: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(obs.len() + received.len());
        x.extend_from_slice(obs);
        x.extend_from_slice(received);
        x
    }

    /// Action distribution and a sampled (or argmax) action.
    pub fn act<R: rand::Rng + ?Sized>(
        &self,
        obs: &[f64],
        received: &[f64],
        greedy: bool,
        rng: &mut R,
    ) -> Result<(Vec<f64>, usize)> {
        check_len("actor input", self.actor.input_len(), obs.len() + received.len())?;
        let probs = self.actor.forward(&Self::actor_input(obs, received))?;
        let action = if greedy {
            nn::argmax(&probs)
        } else {
            nn::categorical_sample(&probs, rng)?
        };
        Ok((probs, action))
    }

    /// Gate decision; index 1 of the gate distribution means "send".
    pub fn gate<R: rand::Rng + ?Sized>(
        &self,
        mode: GatingMode,
        gate_input: &[f64],
        greedy: bool,
        rng: &mut R,
    ) -> Result<GateDecision> {
        if let Some(d) = baseline_gate(mode, rng) {
            return Ok(d);
        }
        let probs = self.gate.forward(gate_input)?;
        let gate = if greedy {
            nn::argmax(&probs)
        } else {
            nn::categorical_sample(&probs, rng)?
        };
        Ok(GateDecision {
            open_probability: probs[1],
            gate: gate as u8,
            sampled: true,
        })
    }
}

impl ValueBundle {
    pub fn new<R: rand::Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        Ok(ValueBundle {
            critic: arch.critic.build(rng)?,
            lagrangian: arch.lagrangian.build(rng)?,
            penalty: arch.penalty.build(rng)?,
        })
    }

    pub fn zeros(arch: &Architecture) -> Result<Self> {
        Ok(ValueBundle {
            critic: arch.critic.zeros()?,
            lagrangian: arch.lagrangian.zeros()?,
            penalty: arch.penalty.zeros()?,
        })
    }

    pub fn check(&self, arch: &Architecture) -> Result<()> {
        for (name, shape, net) in [
            ("critic", &arch.critic, &self.critic),
            ("lagrangian", &arch.lagrangian, &self.lagrangian),
            ("penalty", &arch.penalty, &self.penalty),
        ] {
            if !shape.matches(net) {
                return Err(Error::TaskMismatch(alloc::format!(
                    "{name} is {:?}, task needs {:?}",
                    net.layer_sizes(),
                    shape.sizes
                )));
            }
        }
        Ok(())
    }

    pub fn head(&self, which: ValueHead) -> &Mlp {
        match which {
            ValueHead::Critic => &self.critic,
            ValueHead::Lagrangian => &self.lagrangian,
            ValueHead::Penalty => &self.penalty,
        }
    }

    pub fn value(&self, which: ValueHead, upsilon: &[f64]) -> Result<f64> {
        Ok(self.head(which).forward(upsilon)?[0])
    }
}

/// `υ_i = [o_i, o_{-i}]` with the other agents in ascending order.
pub fn upsilon(observations: &[Vec<f64>], agent: usize) -> Vec<f64> {
    let mut v: Vec<f64> = observations[agent].clone();
    for (j, o) in observations.iter().enumerate() {
        if j != agent {
            v.extend_from_slice(o);
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use alloc::vec;
    use rand::Rng as _;

    #[test]
    fn navigation_shapes() {
        let arch = architecture(&TaskSpec::nav(), GateInput::WithMemory);
        assert_eq!(arch.encoder.sizes, vec![6, 20, 6]);
        assert_eq!(arch.actor.sizes, vec![12, 40, 40, 5]);
        assert_eq!(arch.gate.sizes, vec![12, 40, 40, 2]);
        assert_eq!(arch.critic.sizes, vec![12, 40, 40, 1]);
        assert_eq!(arch.lagrangian.sizes, vec![12, 60, 60, 1]);
        assert_eq!(arch.penalty.sizes, vec![12, 60, 60, 1]);
        let no_mem = architecture(&TaskSpec::nav(), GateInput::CurrentOnly);
        assert_eq!(no_mem.gate.sizes[0], 6);
    }

    #[test]
    fn predator_prey_shapes() {
        let arch = architecture(&TaskSpec::predator_prey(3), GateInput::WithMemory);
        assert_eq!(arch.encoder.sizes, vec![52, 40, 15]);
        assert_eq!(arch.actor.sizes, vec![82, 80, 40, 5]);
        assert_eq!(arch.gate.sizes, vec![30, 80, 80, 2]);
        assert_eq!(arch.critic.sizes, vec![156, 120, 80, 1]);
        assert_eq!(arch.penalty.sizes, vec![156, 60, 40, 1]);
    }

    #[test]
    fn zero_networks() {
        let arch = architecture(&TaskSpec::nav(), GateInput::WithMemory);
        let agents = AgentBundle::zeros(&arch).unwrap();
        let values = ValueBundle::zeros(&arch).unwrap();
        let mut rng = seeded_rng(0);
        assert_eq!(agents.encode(&[0.3; 6]).unwrap(), vec![0.0; 6]);
        let (probs, _) = agents.act(&[0.1; 6], &[0.0; 6], false, &mut rng).unwrap();
        assert!(probs.iter().all(|&p| (p - 0.2).abs() < 1e-15));
        let d = agents.gate(GatingMode::Learned, &[0.5; 12], false, &mut rng).unwrap();
        assert_eq!(d.open_probability, 0.5);
        assert_eq!(values.value(ValueHead::Critic, &[0.4; 12]).unwrap(), 0.0);
        assert!(agents.act(&[0.1; 6], &[0.0; 5], false, &mut rng).is_err());
        assert!(values.value(ValueHead::Penalty, &[0.4; 6]).is_err());
    }

    #[test]
    fn messages_are_bounded_and_distributions_normalized() {
        let arch = architecture(&TaskSpec::nav(), GateInput::WithMemory);
        let mut rng = seeded_rng(4);
        let agents = AgentBundle::new(&arch, &mut rng).unwrap();
        for _ in 0..10_000 {
            let o: Vec<f64> = (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let m = agents.encode(&o).unwrap();
            assert_eq!(m.len(), 6);
            assert!(m.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        let (probs, a) = agents.act(&[0.5; 6], &[0.2; 6], false, &mut rng).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(a < 5);
    }

    #[test]
    fn baseline_modes() {
        let mut rng = seeded_rng(9);
        assert_eq!(baseline_gate(GatingMode::Full, &mut rng).unwrap().gate, 1);
        assert_eq!(baseline_gate(GatingMode::Never, &mut rng).unwrap().gate, 0);
        assert!(baseline_gate(GatingMode::Learned, &mut rng).is_none());
        let draws = 100_000;
        let opens: u32 = (0..draws)
            .map(|_| baseline_gate(GatingMode::Dropout { p: 0.5 }, &mut rng).unwrap().gate as u32)
            .sum();
        assert!((opens as f64 / draws as f64 - 0.5).abs() < 0.01);
        assert!(GatingMode::Dropout { p: 1.5 }.validate().is_err());
    }

    #[test]
    fn upsilon_puts_own_observation_first() {
        let obs = vec![vec![1.0], vec![2.0], vec![3.0]];
        assert_eq!(upsilon(&obs, 1), vec![2.0, 1.0, 3.0]);
        assert_eq!(upsilon(&obs, 0), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn shared_parameters_commute_with_agent_permutation() {
        let arch = architecture(&TaskSpec::nav(), GateInput::WithMemory);
        let mut rng = seeded_rng(12);
        let agents = AgentBundle::new(&arch, &mut rng).unwrap();
        let obs: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..6).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let msgs: Vec<Vec<f64>> = obs.iter().map(|o| agents.encode(o).unwrap()).collect();
        let dist = |i: usize, o: &[Vec<f64>], m: &[Vec<f64>]| {
            agents
                .actor
                .forward(&AgentBundle::actor_input(&o[i], &m[1 - i]))
                .unwrap()
        };
        let swapped_obs = vec![obs[1].clone(), obs[0].clone()];
        let swapped_msgs = vec![msgs[1].clone(), msgs[0].clone()];
        assert_eq!(dist(0, &obs, &msgs), dist(1, &swapped_obs, &swapped_msgs));
        assert_eq!(dist(1, &obs, &msgs), dist(0, &swapped_obs, &swapped_msgs));
    }
}
