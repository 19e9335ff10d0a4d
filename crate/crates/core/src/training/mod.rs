//! Two-stage training.
//!
//! Stage 1 trains the encoder, actor and critic with an actor–critic update
//! on on-policy rollout segments. The actor's loss is backpropagated through
//! every freshly delivered message into the shared encoder. The same loop
//! trains the baselines (no communication, message dropout) by switching the
//! gating mode.
//!
//! Stage 2 freezes encoder, actor and critic and trains the gate against the
//! shaped reward `r - λg`, with a penalty value head estimating the
//! discounted send count and a projected dual update keeping it under the
//! budget's threshold.

mod losses;
mod rollout;

use alloc::vec;
use alloc::vec::Vec;

pub use losses::{
    lambda_update, penalty_td_error, policy_loss, shaped_reward, td_error, value_loss,
};
pub use rollout::{check_version, send_counts, EpisodeRunner, RunSettings, Transition};

use crate::agents::{architecture, upsilon, AgentBundle, GatingMode, ValueBundle};
use crate::bandwidth::{check_gamma, BandwidthBudget, BudgetInputs, VarianceEstimator};
use crate::envs::EnvSpec;
use crate::eval::{evaluate, EvalOptions};
use crate::nn::{Gradient, Mlp};
use crate::{derive_seed, seeded_rng, Error, Result};

/// RNG stream tags below `derive_seed`.
pub mod streams {
    pub const ENV: u64 = 1;
    pub const POLICY: u64 = 2;
    pub const STAGE1_NETS: u64 = 3;
    pub const STAGE2_NETS: u64 = 4;
    pub const STAGE2_ENV: u64 = 5;
    pub const STAGE2_POLICY: u64 = 6;
    pub const EVAL: u64 = 100;
    pub const FINAL_EVAL: u64 = 101;
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct TrainingConfig {
    pub gamma: f64,
    /// Entropy bonus weight.
    pub alpha: f64,
    pub lr_actor_encoder: f64,
    pub lr_critic: f64,
    pub lr_gate: f64,
    pub lr_lagrangian: f64,
    pub lr_penalty: f64,
    pub eta_lambda: f64,
    pub lambda_init: f64,
    pub total_steps: u64,
    /// Steps per on-policy update.
    pub rollout_len: usize,
    /// Steps between σ² (and threshold) refreshes.
    pub sigma2_refresh: u64,
    /// Re-estimate σ² during stage 2; when off, the budget's σ² stays fixed.
    pub track_sigma2: bool,
    /// Message components kept for the σ² estimate.
    pub sigma2_window: usize,
    /// Steps between periodic evaluations.
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub greedy_eval: bool,
    /// Consecutive capped evaluations (after half the budget) that abort a run.
    pub divergence_patience: u32,
    /// Cut the penalty bootstrap at episode ends.
    pub penalty_episodic: bool,
    /// Rewards summed before bootstrapping in the stage-1 critic target and
    /// advantage (1 is one-step TD); truncated at segment ends.
    pub td_steps: usize,
    /// Whose reward trains an agent's gate in stage 2.
    pub gate_credit: GateCredit,
}

/// Reward an agent's gate is credited with before the `−λ·g` shaping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "kebab-case")
)]
pub enum GateCredit {
    /// The sender's own reward.
    Own,
    /// Mean reward over all agents.
    Team,
    /// Mean reward of the agents that receive the sender's message.
    #[default]
    Receivers,
}

impl GateCredit {
    pub fn reward(self, rewards: &[f64], agent: usize) -> f64 {
        let n = rewards.len();
        let total: f64 = rewards.iter().sum();
        match self {
            GateCredit::Own => rewards[agent],
            GateCredit::Team => total / n as f64,
            GateCredit::Receivers if n > 1 => (total - rewards[agent]) / (n - 1) as f64,
            GateCredit::Receivers => rewards[agent],
        }
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            gamma: 0.95,
            alpha: 0.01,
            lr_actor_encoder: 2e-4,
            lr_critic: 4e-4,
            lr_gate: 2e-4,
            lr_lagrangian: 4e-4,
            lr_penalty: 4e-4,
            eta_lambda: 2e-4,
            lambda_init: 0.0,
            total_steps: 600_000,
            rollout_len: 32,
            sigma2_refresh: 5_000,
            track_sigma2: true,
            sigma2_window: 10_000,
            eval_every: 10_000,
            eval_episodes: 50,
            greedy_eval: false,
            divergence_patience: 50,
            penalty_episodic: false,
            td_steps: 1,
            gate_credit: GateCredit::Receivers,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        let rates = [
            ("lr_actor_encoder", self.lr_actor_encoder),
            ("lr_critic", self.lr_critic),
            ("lr_gate", self.lr_gate),
            ("lr_lagrangian", self.lr_lagrangian),
            ("lr_penalty", self.lr_penalty),
            ("eta_lambda", self.eta_lambda),
        ];
        for (name, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite and > 0",
                });
            }
        }
        let checks: [(&'static str, bool, &'static str); 8] = [
            ("td_steps", self.td_steps > 0, "must be > 0"),
            ("alpha", self.alpha >= 0.0 && self.alpha.is_finite(), "must be finite and >= 0"),
            ("lambda_init", self.lambda_init >= 0.0 && self.lambda_init.is_finite(), "must be finite and >= 0"),
            ("total_steps", self.total_steps > 0, "must be > 0"),
            ("rollout_len", self.rollout_len > 0, "must be > 0"),
            ("sigma2_refresh", self.sigma2_refresh > 0, "must be > 0"),
            ("eval_every", self.eval_every > 0, "must be > 0"),
            ("eval_episodes", self.eval_episodes > 0, "must be > 0"),
        ];
        for (name, ok, reason) in checks {
            if !ok {
                return Err(Error::InvalidParameter { name, reason });
            }
        }
        if self.sigma2_window < 2 {
            return Err(Error::InvalidParameter {
                name: "sigma2_window",
                reason: "must be >= 2",
            });
        }
        Ok(())
    }
}

/// One row of the learning-curve log.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricRow {
    pub step: u64,
    pub eval_mean_steps: f64,
    pub eval_std_steps: f64,
    /// Sends per agent per step during the evaluation episodes.
    pub mean_penalty_per_step: f64,
    pub lambda: f64,
    pub sigma2: f64,
    pub p_sup: f64,
    #[cfg_attr(feature = "serde", serde(rename = "C_sup"))]
    pub c_sup: f64,
    #[cfg_attr(feature = "serde", serde(rename = "V_penalty"))]
    pub v_penalty: f64,
}

/// One dual-variable update.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LambdaUpdate {
    pub update: u64,
    pub step: u64,
    pub lambda_before: f64,
    pub v_penalty: f64,
    pub c_sup: f64,
    pub lambda_after: f64,
}

/// Dual variable and its step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangeState {
    pub lambda: f64,
    pub eta_lambda: f64,
}

impl LagrangeState {
    pub fn new(lambda: f64, eta_lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !(eta_lambda > 0.0) {
            return Err(Error::InvalidParameter {
                name: "lagrange state",
                reason: "need lambda >= 0 and eta_lambda > 0",
            });
        }
        Ok(LagrangeState { lambda, eta_lambda })
    }

    pub fn update(&mut self, v_penalty: f64, c_sup: f64) -> f64 {
        self.lambda = lambda_update(self.lambda, v_penalty, c_sup, self.eta_lambda);
        self.lambda
    }
}

/// Aggregates from one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub samples: usize,
    pub value_loss: f64,
    pub policy_loss: f64,
    /// Mean `V_p(υ)` over the segment (stage 2 only).
    pub v_penalty: f64,
}

/// Stage-1 update on one segment: critic TD, and the policy-gradient loss
/// through actor and encoder. Gradients are averaged over every
/// `(step, agent)` sample before one Adam step per network.
pub fn stage1_update(
    config: &TrainingConfig,
    agents: &mut AgentBundle,
    critic: &mut Mlp,
    segment: &[Transition],
) -> Result<UpdateStats> {
    let mut g_enc = Gradient::zeros_like(&agents.encoder);
    let mut g_actor = Gradient::zeros_like(&agents.actor);
    let mut g_critic = Gradient::zeros_like(critic);
    let mut stats = UpdateStats::default();
    let msg_len = agents.encoder.output_len();
    let obs_dim = agents.encoder.input_len();

    let targets = n_step_targets(critic, segment, config.gamma, config.td_steps)?;
    for (tr, target) in segment.iter().zip(&targets) {
        let n = tr.n_agents();
        let enc_traces = tr
            .observations
            .iter()
            .map(|o| agents.encoder.forward_trace(o))
            .collect::<Result<Vec<_>>>()?;
        let mut msg_grads = vec![vec![0.0; msg_len]; n];
        for i in 0..n {
            let ups = upsilon(&tr.observations, i);
            let v_trace = critic.forward_trace(&ups)?;
            let delta = target[i] - v_trace.output()[0];
            let (vl, vg) = value_loss(delta);
            critic.backward_trace(&v_trace, &vg, &mut g_critic)?;

            let x = AgentBundle::actor_input(&tr.observations[i], &tr.received[i]);
            let a_trace = agents.actor.forward_trace(&x)?;
            let (pl, upstream) = policy_loss(a_trace.output(), tr.actions[i], delta, config.alpha)?;
            let dx = agents.actor.backward_trace(&a_trace, &upstream, &mut g_actor)?;
            let senders = (0..n).filter(|&j| j != i);
            for (k, j) in senders.enumerate() {
                if tr.fresh[i][k] {
                    let slot = &dx[obs_dim + k * msg_len..obs_dim + (k + 1) * msg_len];
                    msg_grads[j].iter_mut().zip(slot).for_each(|(a, b)| *a += b);
                }
            }
            stats.samples += 1;
            stats.value_loss += vl;
            stats.policy_loss += pl;
        }
        for (j, g) in msg_grads.iter().enumerate() {
            if g.iter().any(|&v| v != 0.0) {
                agents.encoder.backward_trace(&enc_traces[j], g, &mut g_enc)?;
            }
        }
    }
    if stats.samples == 0 {
        return Ok(stats);
    }
    let scale = 1.0 / stats.samples as f64;
    for g in [&mut g_enc, &mut g_actor, &mut g_critic] {
        g.scale(scale);
    }
    critic.adam_step(&g_critic, config.lr_critic)?;
    agents.actor.adam_step(&g_actor, config.lr_actor_encoder)?;
    agents.encoder.adam_step(&g_enc, config.lr_actor_encoder)?;
    stats.value_loss *= scale;
    stats.policy_loss *= scale;
    Ok(stats)
}

/// Per-step, per-agent critic targets: up to `n` discounted rewards followed
/// by the bootstrap `V(υ')`, cut at episode ends and at the segment end.
/// With `n = 1` this is `r + γ(1 - done)V(υ')`.
pub fn n_step_targets(critic: &Mlp, segment: &[Transition], gamma: f64, n: usize) -> Result<Vec<Vec<f64>>> {
    let boot = segment
        .iter()
        .map(|tr| {
            (0..tr.n_agents())
                .map(|i| {
                    if tr.done {
                        Ok(0.0)
                    } else {
                        Ok(critic.forward(&upsilon(&tr.next_observations, i))?[0])
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut targets = Vec::with_capacity(segment.len());
    for t in 0..segment.len() {
        let agents = segment[t].n_agents();
        let mut row = vec![0.0; agents];
        for (i, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut discount = 1.0;
            for k in 0..n.max(1) {
                let idx = t + k;
                let tr = &segment[idx];
                acc += discount * tr.rewards[i];
                discount *= gamma;
                if tr.done {
                    break;
                }
                if k + 1 == n.max(1) || idx + 1 == segment.len() {
                    acc += discount * boot[idx][i];
                    break;
                }
            }
            *out = acc;
        }
        targets.push(row);
    }
    Ok(targets)
}

/// Stage-2 update on one segment: Lagrangian value TD on `r - λg`, gate
/// policy gradient on sampled gates, and penalty value TD on `g`.
pub fn stage2_update(
    config: &TrainingConfig,
    gate: &mut Mlp,
    lagrangian: &mut Mlp,
    penalty: &mut Mlp,
    segment: &[Transition],
) -> Result<UpdateStats> {
    let mut g_gate = Gradient::zeros_like(gate);
    let mut g_lagr = Gradient::zeros_like(lagrangian);
    let mut g_pen = Gradient::zeros_like(penalty);
    let mut stats = UpdateStats::default();
    let mut v_penalty = 0.0;

    for tr in segment {
        for i in 0..tr.n_agents() {
            let ups = upsilon(&tr.observations, i);
            let next = upsilon(&tr.next_observations, i);
            let g = tr.gates[i];

            let l_trace = lagrangian.forward_trace(&ups)?;
            let bootstrap = if tr.done { 0.0 } else { lagrangian.forward(&next)?[0] };
            let r = shaped_reward(config.gate_credit.reward(&tr.rewards, i), tr.lambda, g);
            let delta_l = r + config.gamma * bootstrap - l_trace.output()[0];
            let (vl, vg) = value_loss(delta_l);
            lagrangian.backward_trace(&l_trace, &vg, &mut g_lagr)?;

            if tr.sampled[i] {
                let trace = gate.forward_trace(&tr.gate_inputs[i])?;
                let (pl, upstream) = policy_loss(trace.output(), g as usize, delta_l, config.alpha)?;
                gate.backward_trace(&trace, &upstream, &mut g_gate)?;
                stats.policy_loss += pl;
            }

            let p_trace = penalty.forward_trace(&ups)?;
            let vp = p_trace.output()[0];
            let cut = tr.done && config.penalty_episodic;
            let p_boot = if cut { 0.0 } else { penalty.forward(&next)?[0] };
            let delta_p = g as f64 + config.gamma * p_boot - vp;
            let (_, pg) = value_loss(delta_p);
            penalty.backward_trace(&p_trace, &pg, &mut g_pen)?;

            v_penalty += vp;
            stats.samples += 1;
            stats.value_loss += vl;
        }
    }
    if stats.samples == 0 {
        return Ok(stats);
    }
    let scale = 1.0 / stats.samples as f64;
    for g in [&mut g_gate, &mut g_lagr, &mut g_pen] {
        g.scale(scale);
    }
    lagrangian.adam_step(&g_lagr, config.lr_lagrangian)?;
    penalty.adam_step(&g_pen, config.lr_penalty)?;
    gate.adam_step(&g_gate, config.lr_gate)?;
    stats.value_loss *= scale;
    stats.policy_loss *= scale;
    stats.v_penalty = v_penalty * scale;
    Ok(stats)
}

/// Aborts runs whose evaluations stay at the step cap late in training.
#[derive(Debug, Clone)]
struct DivergenceDetector {
    patience: u32,
    total_steps: u64,
    cap: f64,
    consecutive: u32,
}

impl DivergenceDetector {
    fn new(config: &TrainingConfig, cap: u32) -> Self {
        DivergenceDetector {
            patience: config.divergence_patience,
            total_steps: config.total_steps,
            cap: cap as f64,
            consecutive: 0,
        }
    }

    fn observe(&mut self, step: u64, eval_mean_steps: f64) -> Result<()> {
        if self.patience == 0 || 2 * step < self.total_steps {
            return Ok(());
        }
        if eval_mean_steps >= self.cap {
            self.consecutive += 1;
        } else {
            self.consecutive = 0;
        }
        if self.consecutive >= self.patience {
            return Err(Error::Diverged {
                step,
                consecutive: self.consecutive,
            });
        }
        Ok(())
    }
}

fn budget_for(inputs: &BudgetInputs, sigma2: f64, fallback: &BandwidthBudget) -> BandwidthBudget {
    if sigma2 > 0.0 && sigma2.is_finite() {
        inputs.with_sigma2(sigma2).derive().unwrap_or(*fallback)
    } else {
        *fallback
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Output {
    pub agents: AgentBundle,
    pub values: ValueBundle,
    pub metrics: Vec<MetricRow>,
    /// Variance of the sent message components at the end of training.
    pub sigma2: f64,
    pub episodes: u64,
}

/// Trains encoder, actor and critic under `settings.gating` (full
/// communication for the main method; `Never`/`Dropout` for baselines).
///
/// `budget` only feeds the logged budget columns; its σ² seeds the running
/// variance estimate. `progress` sees every metric row as it is produced.
pub fn run_stage1(
    config: &TrainingConfig,
    env: &EnvSpec,
    settings: RunSettings,
    budget: &BudgetInputs,
    seed: u64,
    init: Option<(AgentBundle, ValueBundle)>,
    progress: &mut dyn FnMut(&MetricRow),
) -> Result<Stage1Output> {
    config.validate()?;
    if settings.gating == GatingMode::Learned {
        return Err(Error::InvalidParameter {
            name: "gating",
            reason: "stage 1 trains with full, none or dropout gating",
        });
    }
    let initial_budget = budget.derive()?;
    let arch = architecture(&env.task(), settings.gate_input);
    let (mut agents, mut values) = match init {
        Some((a, v)) => {
            a.check(&arch)?;
            v.check(&arch)?;
            (a, v)
        }
        None => {
            let mut rng = seeded_rng(derive_seed(seed, streams::STAGE1_NETS));
            (AgentBundle::new(&arch, &mut rng)?, ValueBundle::new(&arch, &mut rng)?)
        }
    };
    let mut runner = EpisodeRunner::new(env, settings, derive_seed(seed, streams::ENV))?;
    let mut rng = seeded_rng(derive_seed(seed, streams::POLICY));
    let mut sigma = VarianceEstimator::new(config.sigma2_window, budget.sigma2);
    let mut detector = DivergenceDetector::new(config, env.step_cap());
    let eval_opts = EvalOptions {
        episodes: config.eval_episodes,
        greedy: config.greedy_eval,
        record: false,
    };
    let eval_seed = derive_seed(seed, streams::EVAL);
    let mut metrics = Vec::new();
    let mut segment = Vec::with_capacity(config.rollout_len);
    let mut version = 0u64;

    for step in 0..config.total_steps {
        let tr = runner.step(&agents, &mut rng, false, 0.0, version)?;
        for (m, &g) in tr.messages.iter().zip(&tr.gates) {
            if g == 1 {
                sigma.push(m);
            }
        }
        segment.push(tr);
        let done = step + 1;
        if segment.len() == config.rollout_len || done == config.total_steps {
            check_version(&segment, version)?;
            stage1_update(config, &mut agents, &mut values.critic, &segment)?;
            version += 1;
            segment.clear();
        }
        if done % config.sigma2_refresh == 0 {
            sigma.refresh();
        }
        if done % config.eval_every == 0 {
            let report = evaluate(&agents, env, settings, &eval_opts, eval_seed, None, config.gamma)?.report;
            let b = budget_for(budget, sigma.sigma2(), &initial_budget);
            let row = MetricRow {
                step: done,
                eval_mean_steps: report.mean_steps,
                eval_std_steps: report.std_steps,
                mean_penalty_per_step: report.sending_probability,
                lambda: 0.0,
                sigma2: b.inputs.sigma2,
                p_sup: b.p_sup,
                c_sup: b.c_sup,
                v_penalty: report.mean_discounted_penalty,
            };
            progress(&row);
            metrics.push(row);
            detector.observe(done, report.mean_steps)?;
        }
    }
    let sigma2 = sigma.refresh();
    Ok(Stage1Output {
        agents,
        values,
        metrics,
        sigma2,
        episodes: runner.episodes(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Output {
    pub agents: AgentBundle,
    pub values: ValueBundle,
    pub metrics: Vec<MetricRow>,
    pub lambda_trace: Vec<LambdaUpdate>,
    pub lambda: f64,
    pub initial_budget: BandwidthBudget,
    pub final_budget: BandwidthBudget,
    pub episodes: u64,
}

/// Trains the gate, Lagrangian and penalty heads with encoder, actor and
/// critic frozen. `agents` and `values` come from stage 1; the gate,
/// Lagrangian and penalty networks are re-initialized from `seed`.
pub fn run_stage2(
    config: &TrainingConfig,
    env: &EnvSpec,
    settings: RunSettings,
    budget: &BudgetInputs,
    seed: u64,
    agents: AgentBundle,
    values: ValueBundle,
    progress: &mut dyn FnMut(&MetricRow),
) -> Result<Stage2Output> {
    config.validate()?;
    if settings.gating != GatingMode::Learned {
        return Err(Error::InvalidParameter {
            name: "gating",
            reason: "stage 2 trains the learned gate",
        });
    }
    let initial_budget = budget.derive()?;
    let mut current_budget = initial_budget;
    let arch = architecture(&env.task(), settings.gate_input);
    // the stage-1 gate may have been built for the other gate-input variant
    let mut agents = agents;
    let mut rng = seeded_rng(derive_seed(seed, streams::STAGE2_NETS));
    agents.gate = arch.gate.build(&mut rng)?;
    agents.check(&arch)?;
    let mut values = values;
    values.lagrangian = arch.lagrangian.build(&mut rng)?;
    values.penalty = arch.penalty.build(&mut rng)?;
    values.check(&arch)?;

    let mut runner = EpisodeRunner::new(env, settings, derive_seed(seed, streams::STAGE2_ENV))?;
    let mut rng = seeded_rng(derive_seed(seed, streams::STAGE2_POLICY));
    let mut lagrange = LagrangeState::new(config.lambda_init, config.eta_lambda)?;
    let mut sigma = VarianceEstimator::new(config.sigma2_window, budget.sigma2);
    let mut detector = DivergenceDetector::new(config, env.step_cap());
    let eval_opts = EvalOptions {
        episodes: config.eval_episodes,
        greedy: config.greedy_eval,
        record: false,
    };
    let eval_seed = derive_seed(seed, streams::EVAL);
    let mut metrics = Vec::new();
    let mut lambda_trace = Vec::new();
    let mut segment = Vec::with_capacity(config.rollout_len);
    let mut version = 0u64;
    let mut last_v_penalty = 0.0;

    for step in 0..config.total_steps {
        let tr = runner.step(&agents, &mut rng, false, lagrange.lambda, version)?;
        for (m, &g) in tr.messages.iter().zip(&tr.gates) {
            if g == 1 {
                sigma.push(m);
            }
        }
        segment.push(tr);
        let done = step + 1;
        if segment.len() == config.rollout_len || done == config.total_steps {
            check_version(&segment, version)?;
            let stats = stage2_update(
                config,
                &mut agents.gate,
                &mut values.lagrangian,
                &mut values.penalty,
                &segment,
            )?;
            let before = lagrange.lambda;
            let after = lagrange.update(stats.v_penalty, current_budget.c_sup);
            lambda_trace.push(LambdaUpdate {
                update: version,
                step: done,
                lambda_before: before,
                v_penalty: stats.v_penalty,
                c_sup: current_budget.c_sup,
                lambda_after: after,
            });
            last_v_penalty = stats.v_penalty;
            version += 1;
            segment.clear();
        }
        if config.track_sigma2 && done % config.sigma2_refresh == 0 {
            current_budget = budget_for(budget, sigma.refresh(), &current_budget);
        }
        if done % config.eval_every == 0 {
            let report = evaluate(&agents, env, settings, &eval_opts, eval_seed, None, config.gamma)?.report;
            let row = MetricRow {
                step: done,
                eval_mean_steps: report.mean_steps,
                eval_std_steps: report.std_steps,
                mean_penalty_per_step: report.sending_probability,
                lambda: lagrange.lambda,
                sigma2: current_budget.inputs.sigma2,
                p_sup: current_budget.p_sup,
                c_sup: current_budget.c_sup,
                v_penalty: last_v_penalty,
            };
            progress(&row);
            metrics.push(row);
            detector.observe(done, report.mean_steps)?;
        }
    }
    Ok(Stage2Output {
        agents,
        values,
        metrics,
        lambda_trace,
        lambda: lagrange.lambda,
        initial_budget,
        final_budget: current_budget,
        episodes: runner.episodes(),
    })
}
