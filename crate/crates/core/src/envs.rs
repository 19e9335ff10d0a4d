//! Gridworld tasks.
//!
//! - [`NavEnv`]: two agents on a walled grid, each heading for its own
//!   (drifting) destination. An agent observes its own position, the other
//!   agent's position and the *other agent's* destination, so it only learns
//!   where its own destination is through the other agent's messages.
//! - [`PredatorPreyEnv`]: `N` predators chase prey on a torus. Each predator
//!   sees a 5×5 window around itself plus its own coordinates; prey flee the
//!   nearest predator with full vision.
//!
//! Both are deterministic given the construction seed and the action sequence.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::{seeded_rng, Error, Result, Rng};

pub const N_ACTIONS: usize = 5;
pub const VIEW_RADIUS: i32 = 2;
pub const VIEW_CELLS: usize = 25;
pub const NAV_OBS_DIM: usize = 6;
pub const PP_OBS_DIM: usize = 2 * VIEW_CELLS + 2;

/// Agent moves, in tie-break priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Move {
    pub const ALL: [Move; N_ACTIONS] = [Move::Up, Move::Down, Move::Left, Move::Right, Move::Stay];

    pub fn from_index(a: usize) -> Result<Move> {
        Move::ALL.get(a).copied().ok_or(Error::InvalidAction(a))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn offset(self) -> (i32, i32) {
        match self {
            Move::Up => (0, 1),
            Move::Down => (0, -1),
            Move::Left => (-1, 0),
            Move::Right => (1, 0),
            Move::Stay => (0, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }

    fn clamped_step(self, m: Move, grid: i32) -> Pos {
        let (dx, dy) = m.offset();
        Pos::new((self.x + dx).clamp(0, grid - 1), (self.y + dy).clamp(0, grid - 1))
    }

    fn wrapped_step(self, m: Move, grid: i32) -> Pos {
        let (dx, dy) = m.offset();
        Pos::new((self.x + dx).rem_euclid(grid), (self.y + dy).rem_euclid(grid))
    }

    fn translate(self, dx: i32, dy: i32, grid: i32) -> Pos {
        Pos::new((self.x + dx).rem_euclid(grid), (self.y + dy).rem_euclid(grid))
    }
}

/// Minimal signed displacement from `a` to `b` on a torus, per axis.
///
/// Each component satisfies `|d| <= grid/2`; at exactly half the grid the
/// sign of the raw difference is kept, which keeps the map antisymmetric.
pub fn toroidal_delta(a: Pos, b: Pos, grid: i32) -> (i32, i32) {
    let wrap = |d: i32| {
        if 2 * d.abs() > grid {
            d - d.signum() * grid
        } else {
            d
        }
    };
    (wrap(b.x - a.x), wrap(b.y - a.y))
}

/// Manhattan distance on the torus.
pub fn toroidal_distance(a: Pos, b: Pos, grid: i32) -> i32 {
    let (dx, dy) = toroidal_delta(a, b, grid);
    dx.abs() + dy.abs()
}

fn toroidal_sq_euclid(a: Pos, b: Pos, grid: i32) -> i32 {
    let (dx, dy) = toroidal_delta(a, b, grid);
    dx * dx + dy * dy
}

/// Per-agent flags reported by a step, used for trajectory annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AgentInfo {
    /// Navigation: on own destination after the move.
    pub reached: bool,
    /// Navigation: own destination moved this step.
    pub target_moved: bool,
    /// Predator–prey: this step's capture credited to every predator.
    pub captured: bool,
    /// Predator–prey: number of other predators sharing the cell.
    pub collisions: u32,
    /// Predator–prey: a live prey is inside the local view.
    pub prey_visible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub observations: Vec<Vec<f64>>,
    pub done: bool,
    pub info: Vec<AgentInfo>,
}

/// Environment state for trajectory dumps.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "task", rename_all = "kebab-case")
)]
pub enum Snapshot {
    Nav {
        agents: Vec<Pos>,
        destinations: Vec<Pos>,
        step: u32,
    },
    PredatorPrey {
        predators: Vec<Pos>,
        preys: Vec<Pos>,
        alive: Vec<bool>,
        step: u32,
    },
}

pub trait MultiAgentEnv {
    fn n_agents(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn step_cap(&self) -> u32;
    fn reset(&mut self) -> Vec<Vec<f64>>;
    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome>;
    fn observations(&self) -> Vec<Vec<f64>>;
    fn snapshot(&self) -> Snapshot;
}

// ---------------------------------------------------------------------------
// Cooperative navigation

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct NavConfig {
    pub grid_size: u32,
    /// Per-step probability that each destination drifts one cell.
    pub p_move: f64,
    pub step_cap: u32,
    pub reach_reward: f64,
    pub step_penalty: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        NavConfig {
            grid_size: 10,
            p_move: 0.1,
            step_cap: 100,
            reach_reward: 0.2,
            step_penalty: -0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavState {
    pub grid_size: u32,
    pub agents: [Pos; 2],
    pub destinations: [Pos; 2],
    pub step_count: u32,
}

impl NavState {
    /// Agent `i` sees `[own pos, other pos, other's destination]`, scaled to [0, 1].
    pub fn observation(&self, i: usize) -> Vec<f64> {
        let j = 1 - i;
        let scale = (self.grid_size.max(2) - 1) as f64;
        [self.agents[i], self.agents[j], self.destinations[j]]
            .iter()
            .flat_map(|p| [p.x as f64 / scale, p.y as f64 / scale])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct NavEnv {
    pub config: NavConfig,
    pub state: NavState,
    rng: Rng,
}

/// Fresh navigation episode from a seed: agents and destinations on four
/// distinct uniformly random cells.
pub fn nav_reset(config: NavConfig, seed: u64) -> Result<(NavEnv, Vec<Vec<f64>>)> {
    let mut env = NavEnv::new(config, seed)?;
    let obs = env.reset();
    Ok((env, obs))
}

impl NavEnv {
    pub fn new(config: NavConfig, seed: u64) -> Result<Self> {
        if config.grid_size < 4 {
            return Err(Error::InvalidParameter {
                name: "grid_size",
                reason: "navigation needs at least a 4x4 grid",
            });
        }
        if !(0.0..=1.0).contains(&config.p_move) {
            return Err(Error::InvalidParameter {
                name: "p_move",
                reason: "must lie in [0, 1]",
            });
        }
        let mut env = NavEnv {
            config,
            state: NavState {
                grid_size: config.grid_size,
                agents: [Pos::default(); 2],
                destinations: [Pos::default(); 2],
                step_count: 0,
            },
            rng: seeded_rng(seed),
        };
        env.reset();
        Ok(env)
    }

    fn grid(&self) -> i32 {
        self.config.grid_size as i32
    }
}

fn distinct_cells(rng: &mut Rng, grid: i32, count: usize) -> Vec<Pos> {
    let mut cells: Vec<Pos> = Vec::with_capacity(count);
    while cells.len() < count {
        let p = Pos::new(rng.gen_range(0..grid), rng.gen_range(0..grid));
        if !cells.contains(&p) {
            cells.push(p);
        }
    }
    cells
}

impl MultiAgentEnv for NavEnv {
    fn n_agents(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        NAV_OBS_DIM
    }

    fn step_cap(&self) -> u32 {
        self.config.step_cap
    }

    fn reset(&mut self) -> Vec<Vec<f64>> {
        let grid = self.grid();
        let cells = distinct_cells(&mut self.rng, grid, 4);
        self.state.agents = [cells[0], cells[1]];
        self.state.destinations = [cells[2], cells[3]];
        self.state.step_count = 0;
        self.observations()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        if actions.len() != 2 {
            return Err(Error::InvalidParameter {
                name: "actions",
                reason: "navigation takes exactly two actions",
            });
        }
        let moves = [Move::from_index(actions[0])?, Move::from_index(actions[1])?];
        let grid = self.grid();
        for (agent, m) in self.state.agents.iter_mut().zip(moves) {
            *agent = agent.clamped_step(m, grid);
        }
        self.state.step_count += 1;

        let mut info = [AgentInfo::default(); 2];
        let mut rewards = vec![0.0; 2];
        for i in 0..2 {
            info[i].reached = self.state.agents[i] == self.state.destinations[i];
            rewards[i] = if info[i].reached {
                self.config.reach_reward
            } else {
                self.config.step_penalty
            };
        }
        let success = info[0].reached && info[1].reached;
        let done = success || self.state.step_count >= self.config.step_cap;
        if !done {
            for i in 0..2 {
                if self.rng.gen::<f64>() < self.config.p_move {
                    let m = Move::ALL[self.rng.gen_range(0..4)];
                    let next = self.state.destinations[i].clamped_step(m, grid);
                    info[i].target_moved = next != self.state.destinations[i];
                    self.state.destinations[i] = next;
                }
            }
        }
        Ok(StepOutcome {
            rewards,
            observations: self.observations(),
            done,
            info: info.to_vec(),
        })
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        (0..2).map(|i| self.state.observation(i)).collect()
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::Nav {
            agents: self.state.agents.to_vec(),
            destinations: self.state.destinations.to_vec(),
            step: self.state.step_count,
        }
    }
}

// ---------------------------------------------------------------------------
// Predator–prey

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct PredatorPreyConfig {
    pub grid_size: u32,
    pub predators: usize,
    pub preys: usize,
    pub step_cap: u32,
    pub capture_reward: f64,
    pub collision_penalty: f64,
    pub step_penalty: f64,
}

impl Default for PredatorPreyConfig {
    fn default() -> Self {
        PredatorPreyConfig {
            grid_size: 10,
            predators: 3,
            preys: 1,
            step_cap: 200,
            capture_reward: 0.5,
            collision_penalty: -0.05,
            step_penalty: -0.0025,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreyPredState {
    pub grid_size: u32,
    pub predators: Vec<Pos>,
    pub preys: Vec<Pos>,
    pub prey_alive: Vec<bool>,
    pub step_count: u32,
}

impl PreyPredState {
    fn grid(&self) -> i32 {
        self.grid_size as i32
    }

    /// 25 prey flags and 25 other-predator flags over the 5×5 window (row by
    /// row, from offset -2 to +2), then own coordinates scaled to [0, 1].
    pub fn observation(&self, i: usize) -> Vec<f64> {
        let grid = self.grid();
        let me = self.predators[i];
        let mut obs = vec![0.0; PP_OBS_DIM];
        let cell_index = |p: Pos| -> Option<usize> {
            let (dx, dy) = toroidal_delta(me, p, grid);
            (dx.abs() <= VIEW_RADIUS && dy.abs() <= VIEW_RADIUS).then(|| {
                ((dy + VIEW_RADIUS) * (2 * VIEW_RADIUS + 1) + dx + VIEW_RADIUS) as usize
            })
        };
        for (p, _) in self.preys.iter().zip(&self.prey_alive).filter(|(_, &a)| a) {
            if let Some(k) = cell_index(*p) {
                obs[k] = 1.0;
            }
        }
        for (j, p) in self.predators.iter().enumerate() {
            if j != i {
                if let Some(k) = cell_index(*p) {
                    obs[VIEW_CELLS + k] = 1.0;
                }
            }
        }
        let scale = (self.grid_size.max(2) - 1) as f64;
        obs[2 * VIEW_CELLS] = me.x as f64 / scale;
        obs[2 * VIEW_CELLS + 1] = me.y as f64 / scale;
        obs
    }

    pub fn prey_visible(&self, i: usize) -> bool {
        self.observation(i)[..VIEW_CELLS].iter().any(|&v| v > 0.0)
    }

    /// Shifts every entity by `(dx, dy)` modulo the grid.
    pub fn translated(&self, dx: i32, dy: i32) -> Self {
        let grid = self.grid();
        PreyPredState {
            predators: self.predators.iter().map(|p| p.translate(dx, dy, grid)).collect(),
            preys: self.preys.iter().map(|p| p.translate(dx, dy, grid)).collect(),
            ..self.clone()
        }
    }
}

/// Escape move for a live prey.
///
/// Maximizes the toroidal Manhattan distance to the nearest predator after
/// the move; ties go to the larger squared Euclidean distance to the nearest
/// predator, then to the earlier move in [`Move::ALL`].
pub fn prey_policy(state: &PreyPredState, prey: usize) -> Move {
    let grid = state.grid();
    let here = state.preys[prey];
    let score = |p: Pos| -> (i32, i32) {
        let manhattan = state
            .predators
            .iter()
            .map(|&q| toroidal_distance(p, q, grid))
            .min()
            .unwrap_or(i32::MAX);
        let euclid = state
            .predators
            .iter()
            .map(|&q| toroidal_sq_euclid(p, q, grid))
            .min()
            .unwrap_or(i32::MAX);
        (manhattan, euclid)
    };
    let mut best = Move::Up;
    let mut best_score = score(here.wrapped_step(Move::Up, grid));
    for m in &Move::ALL[1..] {
        let s = score(here.wrapped_step(*m, grid));
        if s > best_score {
            best = *m;
            best_score = s;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct PredatorPreyEnv {
    pub config: PredatorPreyConfig,
    pub state: PreyPredState,
    rng: Rng,
}

impl PredatorPreyEnv {
    pub fn new(config: PredatorPreyConfig, seed: u64) -> Result<Self> {
        if config.grid_size < 5 {
            return Err(Error::InvalidParameter {
                name: "grid_size",
                reason: "predator-prey needs at least a 5x5 grid",
            });
        }
        if config.predators < 1 || config.preys < 1 {
            return Err(Error::InvalidParameter {
                name: "entity count",
                reason: "need at least one predator and one prey",
            });
        }
        if config.predators + config.preys > (config.grid_size * config.grid_size) as usize {
            return Err(Error::InvalidParameter {
                name: "entity count",
                reason: "more entities than cells",
            });
        }
        let mut env = PredatorPreyEnv {
            config,
            state: PreyPredState {
                grid_size: config.grid_size,
                predators: Vec::new(),
                preys: Vec::new(),
                prey_alive: Vec::new(),
                step_count: 0,
            },
            rng: seeded_rng(seed),
        };
        env.reset();
        Ok(env)
    }

    /// Environment starting from an explicit state (tests, replays).
    pub fn from_state(config: PredatorPreyConfig, state: PreyPredState, seed: u64) -> Self {
        PredatorPreyEnv {
            config,
            state,
            rng: seeded_rng(seed),
        }
    }

    fn capture(&mut self) -> u32 {
        let mut captured = 0;
        for (prey, alive) in self.state.preys.iter().zip(self.state.prey_alive.iter_mut()) {
            if *alive && self.state.predators.contains(prey) {
                *alive = false;
                captured += 1;
            }
        }
        captured
    }
}

impl MultiAgentEnv for PredatorPreyEnv {
    fn n_agents(&self) -> usize {
        self.config.predators
    }

    fn obs_dim(&self) -> usize {
        PP_OBS_DIM
    }

    fn step_cap(&self) -> u32 {
        self.config.step_cap
    }

    fn reset(&mut self) -> Vec<Vec<f64>> {
        let n = self.config.predators;
        let cells = distinct_cells(&mut self.rng, self.config.grid_size as i32, n + self.config.preys);
        self.state.predators = cells[..n].to_vec();
        self.state.preys = cells[n..].to_vec();
        self.state.prey_alive = vec![true; self.config.preys];
        self.state.step_count = 0;
        self.observations()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        let n = self.config.predators;
        if actions.len() != n {
            return Err(Error::InvalidParameter {
                name: "actions",
                reason: "need one action per predator",
            });
        }
        let moves = actions
            .iter()
            .map(|&a| Move::from_index(a))
            .collect::<Result<Vec<_>>>()?;
        let grid = self.state.grid();
        for (p, m) in self.state.predators.iter_mut().zip(moves) {
            *p = p.wrapped_step(m, grid);
        }
        let mut captured = self.capture();
        for k in 0..self.state.preys.len() {
            if self.state.prey_alive[k] {
                let m = prey_policy(&self.state, k);
                self.state.preys[k] = self.state.preys[k].wrapped_step(m, grid);
            }
        }
        captured += self.capture();
        self.state.step_count += 1;

        let mut info = vec![AgentInfo::default(); n];
        let mut rewards = vec![0.0; n];
        for i in 0..n {
            let collisions = (0..n)
                .filter(|&j| j != i && self.state.predators[j] == self.state.predators[i])
                .count() as u32;
            info[i].collisions = collisions;
            info[i].captured = captured > 0;
            info[i].prey_visible = self.state.prey_visible(i);
            rewards[i] = if captured == 0 && collisions == 0 {
                self.config.step_penalty
            } else {
                captured as f64 * self.config.capture_reward
                    + collisions as f64 * self.config.collision_penalty
            };
        }
        let all_captured = self.state.prey_alive.iter().all(|a| !a);
        let done = all_captured || self.state.step_count >= self.config.step_cap;
        Ok(StepOutcome {
            rewards,
            observations: self.observations(),
            done,
            info,
        })
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.config.predators)
            .map(|i| self.state.observation(i))
            .collect()
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot::PredatorPrey {
            predators: self.state.predators.clone(),
            preys: self.state.preys.clone(),
            alive: self.state.prey_alive.clone(),
            step: self.state.step_count,
        }
    }
}

/// Either task behind one type, for the trainer.
#[derive(Debug, Clone)]
pub enum TaskEnv {
    Nav(NavEnv),
    PredatorPrey(PredatorPreyEnv),
}

impl MultiAgentEnv for TaskEnv {
    fn n_agents(&self) -> usize {
        match self {
            TaskEnv::Nav(e) => e.n_agents(),
            TaskEnv::PredatorPrey(e) => e.n_agents(),
        }
    }
    fn obs_dim(&self) -> usize {
        match self {
            TaskEnv::Nav(e) => e.obs_dim(),
            TaskEnv::PredatorPrey(e) => e.obs_dim(),
        }
    }
    fn step_cap(&self) -> u32 {
        match self {
            TaskEnv::Nav(e) => e.step_cap(),
            TaskEnv::PredatorPrey(e) => e.step_cap(),
        }
    }
    fn reset(&mut self) -> Vec<Vec<f64>> {
        match self {
            TaskEnv::Nav(e) => e.reset(),
            TaskEnv::PredatorPrey(e) => e.reset(),
        }
    }
    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        match self {
            TaskEnv::Nav(e) => e.step(actions),
            TaskEnv::PredatorPrey(e) => e.step(actions),
        }
    }
    fn observations(&self) -> Vec<Vec<f64>> {
        match self {
            TaskEnv::Nav(e) => e.observations(),
            TaskEnv::PredatorPrey(e) => e.observations(),
        }
    }
    fn snapshot(&self) -> Snapshot {
        match self {
            TaskEnv::Nav(e) => e.snapshot(),
            TaskEnv::PredatorPrey(e) => e.snapshot(),
        }
    }
}

/// Task configuration from which fresh, seeded environments are built.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "task", rename_all = "kebab-case")
)]
pub enum EnvSpec {
    Nav(NavConfig),
    PredatorPrey(PredatorPreyConfig),
}

impl EnvSpec {
    pub fn build(&self, seed: u64) -> Result<TaskEnv> {
        Ok(match self {
            EnvSpec::Nav(c) => TaskEnv::Nav(NavEnv::new(*c, seed)?),
            EnvSpec::PredatorPrey(c) => TaskEnv::PredatorPrey(PredatorPreyEnv::new(*c, seed)?),
        })
    }

    pub fn task(&self) -> crate::agents::TaskSpec {
        match self {
            EnvSpec::Nav(_) => crate::agents::TaskSpec::nav(),
            EnvSpec::PredatorPrey(c) => crate::agents::TaskSpec::predator_prey(c.predators),
        }
    }

    pub fn step_cap(&self) -> u32 {
        match self {
            EnvSpec::Nav(c) => c.step_cap,
            EnvSpec::PredatorPrey(c) => c.step_cap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nav_with(agents: [Pos; 2], destinations: [Pos; 2]) -> NavEnv {
        let config = NavConfig {
            p_move: 0.0,
            ..NavConfig::default()
        };
        let mut env = NavEnv::new(config, 0).unwrap();
        env.state.agents = agents;
        env.state.destinations = destinations;
        env
    }

    #[test]
    fn nav_reset_is_deterministic() {
        let (a, oa) = nav_reset(NavConfig::default(), 17).unwrap();
        let (b, ob) = nav_reset(NavConfig::default(), 17).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(oa, ob);
        let mut cells = a.state.agents.to_vec();
        cells.extend(a.state.destinations);
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(cells[i], cells[j]);
            }
        }
    }

    #[test]
    fn nav_observation_shows_other_destination() {
        let env = nav_with(
            [Pos::new(0, 0), Pos::new(9, 9)],
            [Pos::new(3, 6), Pos::new(6, 3)],
        );
        let o = env.observations();
        assert_eq!(o[0], vec![0.0, 0.0, 1.0, 1.0, 6.0 / 9.0, 3.0 / 9.0]);
        assert_eq!(o[1][4..], [3.0 / 9.0, 6.0 / 9.0]);
        assert!(o.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn nav_rejects_tiny_grid() {
        let config = NavConfig {
            grid_size: 3,
            ..NavConfig::default()
        };
        assert!(NavEnv::new(config, 0).is_err());
    }

    #[test]
    fn nav_reward_and_clamp() {
        let mut env = nav_with(
            [Pos::new(0, 5), Pos::new(4, 4)],
            [Pos::new(7, 7), Pos::new(5, 4)],
        );
        let out = env
            .step(&[Move::Left.index(), Move::Right.index()])
            .unwrap();
        assert_eq!(env.state.agents[0], Pos::new(0, 5));
        assert_eq!(out.rewards, vec![-0.02, 0.2]);
        assert!(out.info[1].reached && !out.done);
        assert!(env.step(&[7, 0]).is_err());
    }

    #[test]
    fn nav_done_when_both_arrive() {
        let mut env = nav_with(
            [Pos::new(2, 2), Pos::new(4, 4)],
            [Pos::new(2, 3), Pos::new(4, 4)],
        );
        let out = env.step(&[Move::Up.index(), Move::Stay.index()]).unwrap();
        assert!(out.done);
        assert_eq!(out.rewards, vec![0.2, 0.2]);
    }

    #[test]
    fn nav_step_cap_ends_episode() {
        let mut env = nav_with(
            [Pos::new(0, 0), Pos::new(9, 9)],
            [Pos::new(5, 5), Pos::new(6, 6)],
        );
        for t in 1..=100 {
            let out = env.step(&[4, 4]).unwrap();
            assert_eq!(out.done, t == 100);
        }
    }

    #[test]
    fn toroidal_delta_cases() {
        assert_eq!(toroidal_delta(Pos::new(1, 0), Pos::new(9, 0), 10), (-2, 0));
        assert_eq!(toroidal_distance(Pos::new(1, 0), Pos::new(9, 0), 10), 2);
        assert_eq!(toroidal_delta(Pos::new(3, 4), Pos::new(3, 4), 10), (0, 0));
        assert_eq!(toroidal_delta(Pos::new(0, 0), Pos::new(5, 0), 10), (5, 0));
        assert_eq!(toroidal_delta(Pos::new(5, 0), Pos::new(0, 0), 10), (-5, 0));
    }

    #[test]
    fn toroidal_delta_is_antisymmetric() {
        let mut rng = seeded_rng(5);
        for _ in 0..1000 {
            let g = rng.gen_range(2..20);
            let a = Pos::new(rng.gen_range(0..g), rng.gen_range(0..g));
            let b = Pos::new(rng.gen_range(0..g), rng.gen_range(0..g));
            let (x, y) = toroidal_delta(a, b, g);
            assert_eq!(toroidal_delta(b, a, g), (-x, -y));
            assert!(2 * x.abs() <= g && 2 * y.abs() <= g);
        }
    }

    fn pp_state(predators: &[Pos], prey: Pos) -> PreyPredState {
        PreyPredState {
            grid_size: 10,
            predators: predators.to_vec(),
            preys: vec![prey],
            prey_alive: vec![true],
            step_count: 0,
        }
    }

    #[test]
    fn prey_flees_adjacent_predator() {
        // predator directly left across the seam
        let s = pp_state(&[Pos::new(9, 5)], Pos::new(0, 5));
        assert_eq!(prey_policy(&s, 0), Move::Right);
    }

    #[test]
    fn prey_tie_goes_to_first_move() {
        let s = pp_state(&[Pos::new(3, 5), Pos::new(7, 5)], Pos::new(5, 5));
        assert_eq!(prey_policy(&s, 0), Move::Up);
    }

    #[test]
    fn capture_rewards_every_predator() {
        let config = PredatorPreyConfig::default();
        let state = pp_state(&[Pos::new(4, 5), Pos::new(0, 0), Pos::new(8, 8)], Pos::new(5, 5));
        let mut env = PredatorPreyEnv::from_state(config, state, 0);
        let out = env.step(&[Move::Right.index(), 4, 4]).unwrap();
        assert!(!env.state.prey_alive[0]);
        assert_eq!(out.rewards, vec![0.5; 3]);
        assert!(out.done);
    }

    #[test]
    fn collision_penalizes_both() {
        let config = PredatorPreyConfig::default();
        let state = pp_state(&[Pos::new(2, 2), Pos::new(3, 2), Pos::new(8, 0)], Pos::new(6, 7));
        let mut env = PredatorPreyEnv::from_state(config, state, 0);
        let out = env
            .step(&[Move::Right.index(), Move::Stay.index(), Move::Stay.index()])
            .unwrap();
        assert_eq!(out.rewards, vec![-0.05, -0.05, -0.0025]);
        assert_eq!(out.info[0].collisions, 1);
    }

    #[test]
    fn local_view_flags() {
        let s = pp_state(&[Pos::new(5, 5), Pos::new(6, 4)], Pos::new(9, 9));
        let o = s.observation(0);
        assert_eq!(o.len(), PP_OBS_DIM);
        assert!(o[..VIEW_CELLS].iter().all(|&v| v == 0.0), "prey out of view");
        // predator 1 at offset (+1, -1): row 1, column 3
        assert_eq!(o[VIEW_CELLS + 5 + 3], 1.0);
        assert_eq!(o[VIEW_CELLS..2 * VIEW_CELLS].iter().sum::<f64>(), 1.0);
        let s = pp_state(&[Pos::new(0, 0)], Pos::new(9, 8));
        // prey at offset (-1, -2) across both seams: row 0, column 1
        assert_eq!(s.observation(0)[1], 1.0);
    }

    #[test]
    fn pp_rejects_bad_actions() {
        let mut env = PredatorPreyEnv::new(PredatorPreyConfig::default(), 1).unwrap();
        assert!(env.step(&[0, 1]).is_err());
        assert_eq!(env.step(&[0, 1, 9]).unwrap_err(), Error::InvalidAction(9));
    }

    #[test]
    fn observation_lengths_hold_across_episode() {
        let mut rng = seeded_rng(3);
        let mut pp = PredatorPreyEnv::new(PredatorPreyConfig::default(), 3).unwrap();
        let mut nav = NavEnv::new(NavConfig::default(), 3).unwrap();
        for _ in 0..300 {
            let a: Vec<usize> = (0..3).map(|_| rng.gen_range(0..5)).collect();
            let o = pp.step(&a).unwrap();
            assert!(o.observations.iter().all(|v| v.len() == PP_OBS_DIM));
            if o.done {
                pp.reset();
            }
            let o = nav.step(&a[..2]).unwrap();
            assert!(o.observations.iter().all(|v| v.len() == NAV_OBS_DIM));
            if o.done {
                nav.reset();
            }
        }
    }
}
