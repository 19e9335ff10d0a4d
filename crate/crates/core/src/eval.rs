//! Evaluation episodes without learning.

use alloc::vec;
use alloc::vec::Vec;

use crate::agents::AgentBundle;
use crate::bandwidth::{channel_stats, discounted_penalty, BandwidthBudget, ChannelStats};
use crate::envs::{AgentInfo, EnvSpec, Snapshot};
use crate::training::{EpisodeRunner, RunSettings, Transition};
use crate::{derive_seed, seeded_rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalOptions {
    pub episodes: usize,
    /// Take the most likely action and gate instead of sampling.
    pub greedy: bool,
    /// Keep every step for a trajectory dump.
    pub record: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            episodes: 1000,
            greedy: false,
            record: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_steps: f64,
    /// Population standard deviation over episodes.
    pub std_steps: f64,
    pub episode_steps: Vec<u32>,
    pub total_steps: u64,
    pub triggers_per_agent: Vec<u64>,
    /// Sends per agent per step.
    pub sending_probability: f64,
    /// Mean per-agent discounted send count `Σ γ^t g_t` per episode.
    pub mean_discounted_penalty: f64,
    pub mean_return: f64,
    pub channel: Option<ChannelStats>,
}

/// One step of a trajectory dump.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryStep {
    pub episode: u32,
    pub t: u32,
    pub state: Snapshot,
    pub observations: Vec<Vec<f64>>,
    pub messages: Vec<Vec<f64>>,
    pub gates: Vec<u8>,
    pub open_probability: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub done: bool,
    pub info: Vec<AgentInfo>,
}

impl TrajectoryStep {
    fn from_transition(episode: u32, tr: Transition) -> Self {
        TrajectoryStep {
            episode,
            t: tr.t as u32,
            state: tr.state,
            observations: tr.observations,
            messages: tr.messages,
            gates: tr.gates,
            open_probability: tr.open_probability,
            actions: tr.actions,
            rewards: tr.rewards,
            done: tr.done,
            info: tr.info,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub trajectory: Vec<TrajectoryStep>,
}

/// Plays `options.episodes` episodes. Episode `k` has its own environment and
/// policy streams derived from `seed`, so results do not depend on how
/// episodes are scheduled.
pub fn evaluate(
    agents: &AgentBundle,
    env: &EnvSpec,
    settings: RunSettings,
    options: &EvalOptions,
    seed: u64,
    budget: Option<&BandwidthBudget>,
    gamma: f64,
) -> Result<Evaluation> {
    if options.episodes == 0 {
        return Err(Error::InvalidParameter {
            name: "episodes",
            reason: "must be >= 1",
        });
    }
    let n = env.task().n_agents;
    let mut episode_steps = Vec::with_capacity(options.episodes);
    let mut triggers = vec![0u64; n];
    let mut penalty_sum = 0.0;
    let mut return_sum = 0.0;
    let mut trajectory = Vec::new();

    for k in 0..options.episodes as u64 {
        let mut runner = EpisodeRunner::new(env, settings, derive_seed(seed, 2 * k))?;
        let mut rng = seeded_rng(derive_seed(seed, 2 * k + 1));
        let mut gates: Vec<Vec<u8>> = vec![Vec::new(); n];
        let mut steps = 0u32;
        loop {
            let tr = runner.step(agents, &mut rng, options.greedy, 0.0, 0)?;
            steps += 1;
            for (i, &g) in tr.gates.iter().enumerate() {
                gates[i].push(g);
                triggers[i] += g as u64;
            }
            return_sum += tr.rewards.iter().sum::<f64>() / n as f64;
            let done = tr.done;
            if options.record {
                trajectory.push(TrajectoryStep::from_transition(k as u32, tr));
            }
            if done {
                break;
            }
        }
        penalty_sum += gates.iter().map(|g| discounted_penalty(g, gamma)).sum::<f64>() / n as f64;
        episode_steps.push(steps);
    }

    let episodes = options.episodes;
    let total_steps: u64 = episode_steps.iter().map(|&s| s as u64).sum();
    let mean_steps = total_steps as f64 / episodes as f64;
    let var = episode_steps
        .iter()
        .map(|&s| (s as f64 - mean_steps) * (s as f64 - mean_steps))
        .sum::<f64>()
        / episodes as f64;
    let total_triggers: u64 = triggers.iter().sum();
    let channel = budget
        .map(|b| channel_stats(total_triggers, total_steps, b))
        .transpose()?;
    Ok(Evaluation {
        report: EvalReport {
            episodes,
            mean_steps,
            std_steps: crate::math::sqrt(var),
            episode_steps,
            total_steps,
            triggers_per_agent: triggers,
            sending_probability: total_triggers as f64 / (n as f64 * total_steps as f64),
            mean_discounted_penalty: penalty_sum / episodes as f64,
            mean_return: return_sum / episodes as f64,
            channel,
        },
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::architecture;
    use crate::comms::GateInput;
    use crate::envs::NavConfig;

    fn nav_agents(seed: u64) -> AgentBundle {
        let arch = architecture(&EnvSpec::Nav(NavConfig::default()).task(), GateInput::WithMemory);
        AgentBundle::new(&arch, &mut seeded_rng(seed)).unwrap()
    }

    #[test]
    fn single_episode_has_zero_std() {
        let env = EnvSpec::Nav(NavConfig::default());
        let opts = EvalOptions {
            episodes: 1,
            ..EvalOptions::default()
        };
        let r = evaluate(&nav_agents(1), &env, RunSettings::full(), &opts, 3, None, 0.95)
            .unwrap()
            .report;
        assert_eq!(r.std_steps, 0.0);
        assert_eq!(r.episode_steps.len(), 1);
    }

    #[test]
    fn full_communication_always_sends() {
        let env = EnvSpec::Nav(NavConfig::default());
        let opts = EvalOptions {
            episodes: 5,
            ..EvalOptions::default()
        };
        let r = evaluate(&nav_agents(2), &env, RunSettings::full(), &opts, 4, None, 0.95)
            .unwrap()
            .report;
        assert_eq!(r.sending_probability, 1.0);
    }

    #[test]
    fn never_sends_only_on_first_steps() {
        let env = EnvSpec::Nav(NavConfig::default());
        let opts = EvalOptions {
            episodes: 7,
            record: true,
            ..EvalOptions::default()
        };
        let ev = evaluate(&nav_agents(3), &env, RunSettings::never(), &opts, 5, None, 0.95).unwrap();
        assert_eq!(ev.report.triggers_per_agent, vec![7, 7]);
        for s in &ev.trajectory {
            let expected = u8::from(s.t == 0);
            assert!(s.gates.iter().all(|&g| g == expected));
        }
        assert!((ev.report.mean_discounted_penalty - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_matches_report() {
        let env = EnvSpec::Nav(NavConfig::default());
        let opts = EvalOptions {
            episodes: 4,
            record: true,
            ..EvalOptions::default()
        };
        let ev = evaluate(&nav_agents(4), &env, RunSettings::dropout(0.5), &opts, 6, None, 0.95).unwrap();
        assert_eq!(ev.trajectory.len() as u64, ev.report.total_steps);
        let sends: u64 = ev.trajectory.iter().flat_map(|s| &s.gates).map(|&g| g as u64).sum();
        assert_eq!(sends, ev.report.triggers_per_agent.iter().sum::<u64>());
        assert_eq!(ev.trajectory.iter().filter(|s| s.done).count(), 4);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let env = EnvSpec::Nav(NavConfig::default());
        let opts = EvalOptions {
            episodes: 3,
            ..EvalOptions::default()
        };
        let a = evaluate(&nav_agents(5), &env, RunSettings::learned(), &opts, 9, None, 0.95).unwrap();
        let b = evaluate(&nav_agents(5), &env, RunSettings::learned(), &opts, 9, None, 0.95).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_episodes_rejected() {
        let env = EnvSpec::Nav(NavConfig::default());
        let opts = EvalOptions {
            episodes: 0,
            ..EvalOptions::default()
        };
        assert!(evaluate(&nav_agents(6), &env, RunSettings::full(), &opts, 0, None, 0.95).is_err());
    }
}
