//! Independent reference checks shared by the oracle tests and the
//! acceptance run. Each returns a summary instead of panicking so callers
//! can report it.

#![allow(dead_code)]

use etcomm_core::agents::{architecture, baseline_gate, AgentBundle, GatingMode, TaskSpec};
use etcomm_core::comms::{latest_trigger, CommState, GateInput, ReceiverMode, TriggerSet};
use etcomm_core::envs::{prey_policy, Move, Pos, PreyPredState};
use etcomm_core::nn::{Gradient, Mlp};
use etcomm_core::training::{policy_loss, value_loss};
use etcomm_core::{seeded_rng, Rng};
use rand::Rng as _;

// ---------------------------------------------------------------------------
// Finite differences

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: String,
    pub parameters: usize,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` over all parameters.
    pub max_rel_err: f64,
    /// Worst single-parameter relative error (noisy for near-zero entries).
    pub worst_entry: f64,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol && self.worst_entry < tol
    }
}

/// Large enough that roundoff stays well below the tolerance, small enough
/// that ReLU kinks are rarely crossed.
const FD_STEP: f64 = 1e-5;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Parameter `j` in the same order as [`flat`].
fn param(net: &mut Mlp, mut j: usize) -> &mut f64 {
    for l in &mut net.layers {
        if j < l.weights.len() {
            return &mut l.weights[j];
        }
        j -= l.weights.len();
        if j < l.biases.len() {
            return &mut l.biases[j];
        }
        j -= l.biases.len();
    }
    panic!("parameter index out of range")
}

fn flat(g: &Gradient) -> Vec<f64> {
    g.layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
        .collect()
}

/// Central differences of `loss` with respect to every parameter of
/// `nets[k]`, compared against `analytic[k]`.
fn compare(
    nets: &mut [Mlp],
    analytic: &[Vec<f64>],
    loss: &dyn Fn(&[Mlp]) -> f64,
) -> (usize, f64, f64) {
    let mut worst = 0.0f64;
    let mut count = 0;
    let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
    for k in 0..nets.len() {
        assert_eq!(nets[k].parameter_count(), analytic[k].len());
        for j in 0..analytic[k].len() {
            let orig = *param(&mut nets[k], j);
            *param(&mut nets[k], j) = orig + FD_STEP;
            let up = loss(nets);
            *param(&mut nets[k], j) = orig - FD_STEP;
            let down = loss(nets);
            *param(&mut nets[k], j) = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[k][j], numeric));
            diff2 += (analytic[k][j] - numeric).powi(2);
            a2 += analytic[k][j].powi(2);
            n2 += numeric * numeric;
            count += 1;
        }
    }
    (count, diff2.sqrt() / a2.sqrt().max(n2.sqrt()).max(1e-300), worst)
}

fn random_input(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn check_softmax_head(name: &str, net: Mlp, rng: &mut Rng) -> GradCheck {
    let x = random_input(rng, net.input_len());
    let probs = net.forward(&x).unwrap();
    let action = rng.gen_range(0..probs.len());
    let (delta, alpha) = (rng.gen_range(-2.0..2.0), 0.01);
    let (_, upstream) = policy_loss(&probs, action, delta, alpha).unwrap();
    let (g, _) = net.backward(&x, &upstream).unwrap();
    let loss = |nets: &[Mlp]| policy_loss(&nets[0].forward(&x).unwrap(), action, delta, alpha).unwrap().0;
    let mut nets = [net];
    let (parameters, max_rel_err, worst_entry) = compare(&mut nets, &[flat(&g)], &loss);
    GradCheck { name: name.into(), parameters, max_rel_err, worst_entry }
}

fn check_value_head(name: &str, net: Mlp, rng: &mut Rng) -> GradCheck {
    let x = random_input(rng, net.input_len());
    let target = rng.gen_range(-2.0..2.0);
    let delta = target - net.forward(&x).unwrap()[0];
    let (_, upstream) = value_loss(delta);
    let (g, _) = net.backward(&x, &upstream).unwrap();
    let loss = |nets: &[Mlp]| value_loss(target - nets[0].forward(&x).unwrap()[0]).0;
    let mut nets = [net];
    let (parameters, max_rel_err, worst_entry) = compare(&mut nets, &[flat(&g)], &loss);
    GradCheck { name: name.into(), parameters, max_rel_err, worst_entry }
}

fn check_encoder(name: &str, net: Mlp, rng: &mut Rng) -> GradCheck {
    let x = random_input(rng, net.input_len());
    let w = random_input(rng, net.output_len());
    let (g, _) = net.backward(&x, &w).unwrap();
    let loss = |nets: &[Mlp]| nets[0].forward(&x).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum();
    let mut nets = [net];
    let (parameters, max_rel_err, worst_entry) = compare(&mut nets, &[flat(&g)], &loss);
    GradCheck { name: name.into(), parameters, max_rel_err, worst_entry }
}

/// Agent 0's policy loss through the messages of every other agent, all
/// produced by the shared encoder.
fn check_composed(name: &str, task: &TaskSpec, bundle: AgentBundle, rng: &mut Rng) -> GradCheck {
    let n = task.n_agents;
    let obs: Vec<Vec<f64>> = (0..n).map(|_| random_input(rng, task.obs_dim)).collect();
    let action = rng.gen_range(0..5);
    let (delta, alpha) = (rng.gen_range(-2.0..2.0), 0.01);

    let forward = |enc: &Mlp, actor: &Mlp| -> (Vec<f64>, Vec<f64>) {
        let received: Vec<f64> = (1..n).flat_map(|j| enc.forward(&obs[j]).unwrap()).collect();
        let input = AgentBundle::actor_input(&obs[0], &received);
        let probs = actor.forward(&input).unwrap();
        (input, probs)
    };
    let (input, probs) = forward(&bundle.encoder, &bundle.actor);
    let (_, upstream) = policy_loss(&probs, action, delta, alpha).unwrap();
    let (g_actor, dx) = bundle.actor.backward(&input, &upstream).unwrap();
    let mut g_enc = Gradient::zeros_like(&bundle.encoder);
    let m = task.msg_len;
    for (slot, j) in (1..n).enumerate() {
        let start = task.obs_dim + slot * m;
        let trace = bundle.encoder.forward_trace(&obs[j]).unwrap();
        bundle.encoder.backward_trace(&trace, &dx[start..start + m], &mut g_enc).unwrap();
    }
    let loss = |nets: &[Mlp]| policy_loss(&forward(&nets[0], &nets[1]).1, action, delta, alpha).unwrap().0;
    let mut nets = [bundle.encoder, bundle.actor];
    let (parameters, max_rel_err, worst_entry) = compare(&mut nets, &[flat(&g_enc), flat(&g_actor)], &loss);
    GradCheck { name: name.into(), parameters, max_rel_err, worst_entry }
}

/// Every network of both tasks, both gate inputs, and the composed
/// encoder-to-actor path.
pub fn gradient_suite() -> Vec<GradCheck> {
    let mut rng = seeded_rng(0x6ead);
    let mut out = Vec::new();
    for task in [TaskSpec::nav(), TaskSpec::predator_prey(3)] {
        let tag = format!("{:?}", task.kind).to_lowercase();
        for gate_input in [GateInput::WithMemory, GateInput::CurrentOnly] {
            let arch = architecture(&task, gate_input);
            let gate = arch.gate.build(&mut rng).unwrap();
            out.push(check_softmax_head(&format!("{tag}/gate/{gate_input:?}"), gate, &mut rng));
        }
        let arch = architecture(&task, GateInput::WithMemory);
        let enc = arch.encoder.build(&mut rng).unwrap();
        out.push(check_encoder(&format!("{tag}/encoder"), enc, &mut rng));
        let actor = arch.actor.build(&mut rng).unwrap();
        out.push(check_softmax_head(&format!("{tag}/actor"), actor, &mut rng));
        for (head, shape) in [("critic", &arch.critic), ("lagrangian", &arch.lagrangian), ("penalty", &arch.penalty)] {
            let net = shape.build(&mut rng).unwrap();
            out.push(check_value_head(&format!("{tag}/{head}"), net, &mut rng));
        }
        let bundle = AgentBundle::new(&arch, &mut rng).unwrap();
        out.push(check_composed(&format!("{tag}/encoder->actor"), &task, bundle, &mut rng));
    }
    out
}

// ---------------------------------------------------------------------------
// Communication replay

#[derive(Debug, Clone, Copy, Default)]
pub struct ReplaySummary {
    pub traces: usize,
    pub checks: usize,
    pub mismatches: usize,
}

/// Random gate/message traces checked against a store of every send.
pub fn comms_replay(traces: usize, seed: u64) -> ReplaySummary {
    let mut rng = seeded_rng(seed);
    let mut s = ReplaySummary { traces, ..Default::default() };
    for trace in 0..traces {
        let mode = if trace % 2 == 0 { ReceiverMode::Zoh } else { ReceiverMode::ZeroPad };
        let n = rng.gen_range(2..6);
        let len = rng.gen_range(1..5);
        let steps = rng.gen_range(1..25u64);
        let p_open = rng.gen_range(0.05..0.95);
        let mut comm = CommState::new(n, len, mode);
        let mut history: Vec<Vec<(u64, Vec<f64>)>> = vec![Vec::new(); n];
        for t in 0..steps {
            let gates: Vec<u8> = (0..n).map(|_| u8::from(t == 0 || rng.gen::<f64>() < p_open)).collect();
            let msgs: Vec<Vec<f64>> = (0..n).map(|_| random_input(&mut rng, len)).collect();
            comm.commit(t, &gates, &msgs).unwrap();
            for i in 0..n {
                if gates[i] == 1 {
                    history[i].push((t, msgs[i].clone()));
                }
            }
            for sender in 0..n {
                let last = history[sender].iter().rev().find(|(k, _)| *k <= t).unwrap();
                let expected = match mode {
                    ReceiverMode::Zoh => last.1.clone(),
                    ReceiverMode::ZeroPad if last.0 == t => last.1.clone(),
                    ReceiverMode::ZeroPad => vec![0.0; len],
                };
                let times = comm.triggers(sender).times();
                let ok_triggers = times.len() == history[sender].len()
                    && latest_trigger(comm.triggers(sender), t).ok() == Some(last.0);
                s.checks += 1;
                if !ok_triggers {
                    s.mismatches += 1;
                }
                for receiver in (0..n).filter(|&r| r != sender) {
                    s.checks += 1;
                    if comm.slot(receiver, sender) != expected.as_slice() {
                        s.mismatches += 1;
                    }
                }
            }
        }
    }
    s
}

/// `latest_trigger` against a linear scan over random sorted trigger sets.
pub fn latest_trigger_scan(cases: usize, seed: u64) -> ReplaySummary {
    let mut rng = seeded_rng(seed);
    let mut s = ReplaySummary { traces: cases, ..Default::default() };
    for _ in 0..cases {
        let mut times: Vec<u64> = (0..rng.gen_range(0..30)).map(|_| rng.gen_range(0..200)).collect();
        times.sort_unstable();
        times.dedup();
        let set = TriggerSet::from_times(times.clone()).unwrap();
        for _ in 0..10 {
            let t = rng.gen_range(0..220);
            let mut scan = None;
            for &u in &times {
                if u <= t {
                    scan = Some(u);
                }
            }
            s.checks += 1;
            if latest_trigger(&set, t).ok() != scan {
                s.mismatches += 1;
            }
        }
    }
    s
}

// ---------------------------------------------------------------------------
// Prey policy

/// Torus distance by minimizing over wrapped images of `b`.
fn image_distances(a: Pos, b: Pos, grid: i32) -> (i32, i32) {
    let axis = |d: i32| (-1..=1).map(|k| (d + k * grid).abs()).min().unwrap();
    let dx = axis(b.x - a.x);
    let dy = axis(b.y - a.y);
    (dx + dy, dx * dx + dy * dy)
}

fn oracle_escape(prey: Pos, predators: &[Pos], grid: i32) -> Move {
    let mut best: Option<(Move, (i32, i32))> = None;
    for m in Move::ALL {
        let (dx, dy) = m.offset();
        let p = Pos::new((prey.x + dx + grid) % grid, (prey.y + dy + grid) % grid);
        let manhattan = predators.iter().map(|&q| image_distances(p, q, grid).0).min().unwrap();
        let euclid = predators.iter().map(|&q| image_distances(p, q, grid).1).min().unwrap();
        if best.map_or(true, |(_, s)| (manhattan, euclid) > s) {
            best = Some((m, (manhattan, euclid)));
        }
    }
    best.unwrap().0
}

/// Every prey position against every placement of one and of two
/// predators on a 6×6 torus.
pub fn prey_grid6() -> ReplaySummary {
    let grid = 6;
    let cells: Vec<Pos> = (0..grid).flat_map(|y| (0..grid).map(move |x| Pos::new(x, y))).collect();
    let mut s = ReplaySummary::default();
    let check = |prey: Pos, predators: Vec<Pos>, s: &mut ReplaySummary| {
        let state = PreyPredState {
            grid_size: grid as u32,
            predators: predators.clone(),
            preys: vec![prey],
            prey_alive: vec![true],
            step_count: 0,
        };
        s.checks += 1;
        if prey_policy(&state, 0) != oracle_escape(prey, &predators, grid) {
            s.mismatches += 1;
        }
    };
    for &prey in &cells {
        for &a in &cells {
            check(prey, vec![a], &mut s);
            for &b in &cells {
                check(prey, vec![a, b], &mut s);
            }
        }
    }
    s.traces = s.checks;
    s
}

// ---------------------------------------------------------------------------
// Dropout gating

/// Fraction of open gates over `draws` dropout decisions.
pub fn dropout_rate(p: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let open: usize = (0..draws)
        .map(|_| baseline_gate(GatingMode::Dropout { p }, &mut rng).unwrap().gate as usize)
        .sum();
    open as f64 / draws as f64
}
