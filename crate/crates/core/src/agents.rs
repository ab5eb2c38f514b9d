//! The three benchmarked learners behind one per-episode interface.
//!
//! * optimized MCTS: one UCT-guided trajectory per episode, backed up into
//!   the global Q/N tables;
//! * tabular Q-Learning with a linearly annealed ε-greedy policy;
//! * "MCTS with policy": before every real move, uniform-random rollouts from
//!   a cloned environment refine a per-(state, action) mean-return table and
//!   the agent acts greedily on it.

use std::time::{Duration, Instant};

use rand::Rng;
use thiserror::Error;

use crate::env::{Action, EnvError, FrozenLake, GridMap, StateId};
use crate::oracle::PolicyVector;
use crate::search::{pick, select_action, QNTables, SearchConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("alpha must lie in (0, 1], got {0}")]
    Alpha(f64),
    #[error("gamma must lie in [0, 1], got {0}")]
    Gamma(f64),
    #[error("epsilon schedule must satisfy 1 >= start >= end >= 0, got start {start} end {end}")]
    Epsilon { start: f64, end: f64 },
    #[error("epsilon decay must span at least one episode")]
    EpsilonDecay,
    #[error("simulations per move must be a positive multiple of 4, got {0}")]
    SimulationsPerMove(usize),
    #[error("rollout horizon must be positive")]
    RolloutHorizon,
}

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode_index: u64,
    pub episode_return: f64,
    pub steps: usize,
    pub success: bool,
    pub wall_time: Duration,
}

impl EpisodeRecord {
    /// Equality ignoring wall time, for replay comparisons.
    pub fn same_outcome(&self, other: &EpisodeRecord) -> bool {
        self.episode_index == other.episode_index
            && self.episode_return == other.episode_return
            && self.steps == other.steps
            && self.success == other.success
    }
}

/// Anything that can score `(state, action)` pairs for greedy extraction.
pub trait ActionValues {
    /// Value used for greedy selection, `None` when the pair carries no
    /// information yet.
    fn action_value(&self, s: StateId, a: Action) -> Option<f64>;
}

impl ActionValues for QNTables {
    fn action_value(&self, s: StateId, a: Action) -> Option<f64> {
        self.mean(s, a)
    }
}

/// Greedy policy over `values`: per non-terminal state the action with the
/// largest known value, lowest index on ties, `Left` when nothing is known.
pub fn greedy_policy<V: ActionValues + ?Sized>(values: &V, map: &GridMap) -> PolicyVector {
    PolicyVector::from_fn(map, |s| {
        let mut best: Option<(Action, f64)> = None;
        for a in Action::ALL {
            if let Some(v) = values.action_value(s, a) {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((a, v));
                }
            }
        }
        best.map_or(Action::Left, |(a, _)| a)
    })
}

fn finish(
    episode_index: u64,
    reached_goal: bool,
    steps: usize,
    started: Instant,
) -> EpisodeRecord {
    EpisodeRecord {
        episode_index,
        episode_return: if reached_goal { 1.0 } else { 0.0 },
        steps,
        success: reached_goal,
        wall_time: started.elapsed(),
    }
}

/// One episode of the optimized MCTS: reset, then repeatedly select by UCT,
/// record the pair and step until the episode ends; the terminal reward is
/// backed up along the whole path.
pub fn run_episode_optimized_mcts<R: Rng + ?Sized>(
    env: &mut FrozenLake,
    tables: &mut QNTables,
    cfg: &SearchConfig,
    rng: &mut R,
    episode_index: u64,
) -> Result<EpisodeRecord, EnvError> {
    let started = Instant::now();
    let mut s = env.reset();
    let mut path = Vec::new();
    let mut episode_return = 0.0;
    while !env.is_done() {
        let a = select_action(tables, s, cfg, rng);
        path.push((s, a));
        let out = env.step(a, rng)?;
        s = out.next_state;
        episode_return = out.reward;
    }
    tables.backpropagate(&path, episode_return);
    Ok(finish(episode_index, episode_return == 1.0, env.steps(), started))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QLearnConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: u64,
}

impl Default for QLearnConfig {
    fn default() -> Self {
        QLearnConfig {
            alpha: 0.1,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay_episodes: 50_000,
        }
    }
}

impl QLearnConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ConfigError::Alpha(self.alpha));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ConfigError::Gamma(self.gamma));
        }
        let (start, end) = (self.epsilon_start, self.epsilon_end);
        if !((0.0..=1.0).contains(&start) && (0.0..=1.0).contains(&end) && start >= end) {
            return Err(ConfigError::Epsilon { start, end });
        }
        if self.epsilon_decay_episodes == 0 {
            return Err(ConfigError::EpsilonDecay);
        }
        Ok(())
    }

    /// Exploration rate for `episode`: linear from start to end over the
    /// decay span, then held at end.
    pub fn epsilon(&self, episode: u64) -> f64 {
        if episode >= self.epsilon_decay_episodes {
            return self.epsilon_end;
        }
        let frac = episode as f64 / self.epsilon_decay_episodes as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Tabular action values for Q-Learning, initialised to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize) -> QTable {
        QTable { values: vec![0.0; n_states * Action::COUNT] }
    }

    pub fn get(&self, s: StateId, a: Action) -> f64 {
        self.values[s.0 * Action::COUNT + a.index()]
    }

    pub fn set(&mut self, s: StateId, a: Action, v: f64) {
        self.values[s.0 * Action::COUNT + a.index()] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self, s: StateId) -> f64 {
        Action::ALL.iter().map(|a| self.get(s, *a)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax at `s` with uniform random tie-breaking.
    pub fn greedy_action<R: Rng + ?Sized>(&self, s: StateId, rng: &mut R) -> Action {
        let best = self.max_value(s);
        let mut ties = [Action::Left; Action::COUNT];
        let mut n = 0;
        for a in Action::ALL {
            if self.get(s, a) == best {
                ties[n] = a;
                n += 1;
            }
        }
        pick(&ties[..n], rng)
    }
}

impl ActionValues for QTable {
    fn action_value(&self, s: StateId, a: Action) -> Option<f64> {
        Some(self.get(s, a))
    }
}

/// ε-greedy choice: uniform random with probability `epsilon`, else greedy.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &QTable, s: StateId, epsilon: f64, rng: &mut R) -> Action {
    if rng.random::<f64>() < epsilon {
        Action::ALL[rng.random_range(0..Action::COUNT)]
    } else {
        q.greedy_action(s, rng)
    }
}

/// One Q-Learning episode. The bootstrap term is dropped when the episode
/// ends, whether on a terminal cell or by truncation.
pub fn run_episode_qlearning<R: Rng + ?Sized>(
    env: &mut FrozenLake,
    q: &mut QTable,
    cfg: &QLearnConfig,
    rng: &mut R,
    episode_index: u64,
) -> Result<EpisodeRecord, EnvError> {
    let started = Instant::now();
    let epsilon = cfg.epsilon(episode_index);
    let mut s = env.reset();
    let mut reached_goal = false;
    while !env.is_done() {
        let a = epsilon_greedy(q, s, epsilon, rng);
        let out = env.step(a, rng)?;
        let bootstrap = if out.terminal || out.truncated { 0.0 } else { q.max_value(out.next_state) };
        let old = q.get(s, a);
        q.set(s, a, old + cfg.alpha * (out.reward + cfg.gamma * bootstrap - old));
        reached_goal = out.reward == 1.0;
        s = out.next_state;
    }
    Ok(finish(episode_index, reached_goal, env.steps(), started))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyMctsConfig {
    pub simulations_per_move: usize,
    /// Maximum rollout length; `None` means the environment's step cap.
    pub rollout_horizon: Option<usize>,
}

impl Default for PolicyMctsConfig {
    fn default() -> Self {
        PolicyMctsConfig { simulations_per_move: 100, rollout_horizon: None }
    }
}

impl PolicyMctsConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let sims = self.simulations_per_move;
        if sims == 0 || sims % Action::COUNT != 0 {
            return Err(ConfigError::SimulationsPerMove(sims));
        }
        if self.rollout_horizon == Some(0) {
            return Err(ConfigError::RolloutHorizon);
        }
        Ok(())
    }

    pub fn rollouts_per_action(&self) -> usize {
        self.simulations_per_move / Action::COUNT
    }
}

/// Running mean of rollout returns per `(state, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTable {
    mean: Vec<f64>,
    count: Vec<u64>,
}

impl RolloutTable {
    pub fn new(n_states: usize) -> RolloutTable {
        RolloutTable {
            mean: vec![0.0; n_states * Action::COUNT],
            count: vec![0; n_states * Action::COUNT],
        }
    }

    fn idx(s: StateId, a: Action) -> usize {
        s.0 * Action::COUNT + a.index()
    }

    pub fn mean(&self, s: StateId, a: Action) -> f64 {
        self.mean[Self::idx(s, a)]
    }

    pub fn count(&self, s: StateId, a: Action) -> u64 {
        self.count[Self::idx(s, a)]
    }

    pub fn record(&mut self, s: StateId, a: Action, ret: f64) {
        let i = Self::idx(s, a);
        self.count[i] += 1;
        self.mean[i] += (ret - self.mean[i]) / self.count[i] as f64;
    }

    fn greedy_action<R: Rng + ?Sized>(&self, s: StateId, rng: &mut R) -> Action {
        let best = Action::ALL.iter().map(|a| self.mean(s, *a)).fold(f64::NEG_INFINITY, f64::max);
        let mut ties = [Action::Left; Action::COUNT];
        let mut n = 0;
        for a in Action::ALL {
            if self.mean(s, a) == best {
                ties[n] = a;
                n += 1;
            }
        }
        pick(&ties[..n], rng)
    }
}

impl ActionValues for RolloutTable {
    fn action_value(&self, s: StateId, a: Action) -> Option<f64> {
        (self.count(s, a) > 0).then(|| self.mean(s, a))
    }
}

/// Plays `first`, then uniform-random actions on a copy of `env` until the
/// copy finishes or `horizon` steps were taken. Returns 1 on reaching a goal.
pub fn rollout<R: Rng + ?Sized>(
    env: &FrozenLake,
    first: Action,
    horizon: usize,
    rng: &mut R,
) -> Result<f64, EnvError> {
    let mut sim = env.clone();
    let mut a = first;
    for _ in 0..horizon {
        let out = sim.step(a, rng)?;
        if sim.is_done() {
            return Ok(out.reward);
        }
        a = Action::ALL[rng.random_range(0..Action::COUNT)];
    }
    Ok(0.0)
}

/// One episode of MCTS with policy: every real move is preceded by
/// `simulations_per_move / 4` rollouts per action from the current state.
pub fn run_episode_policy_mcts<R: Rng + ?Sized>(
    env: &mut FrozenLake,
    table: &mut RolloutTable,
    cfg: &PolicyMctsConfig,
    rng: &mut R,
    episode_index: u64,
) -> Result<EpisodeRecord, EnvError> {
    let started = Instant::now();
    let horizon = cfg.rollout_horizon.unwrap_or(env.config().step_cap);
    let per_action = cfg.rollouts_per_action();
    let mut s = env.reset();
    let mut reached_goal = false;
    while !env.is_done() {
        for a in Action::ALL {
            for _ in 0..per_action {
                let ret = rollout(env, a, horizon, rng)?;
                table.record(s, a, ret);
            }
        }
        let a = table.greedy_action(s, rng);
        let out = env.step(a, rng)?;
        reached_goal = out.reward == 1.0;
        s = out.next_state;
    }
    Ok(finish(episode_index, reached_goal, env.steps(), started))
}

/// Learner configuration, one variant per benchmarked algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentConfig {
    OptimizedMcts(SearchConfig),
    QLearning(QLearnConfig),
    PolicyMcts(PolicyMctsConfig),
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            AgentConfig::OptimizedMcts(_) => Ok(()),
            AgentConfig::QLearning(c) => c.validate(),
            AgentConfig::PolicyMcts(c) => c.validate(),
        }
    }
}

/// A learner together with the state it carries across episodes.
#[derive(Debug, Clone)]
pub enum Agent {
    OptimizedMcts { tables: QNTables, cfg: SearchConfig },
    QLearning { q: QTable, cfg: QLearnConfig },
    PolicyMcts { table: RolloutTable, cfg: PolicyMctsConfig },
}

impl Agent {
    pub fn new(config: AgentConfig, n_states: usize) -> Agent {
        match config {
            AgentConfig::OptimizedMcts(cfg) => Agent::OptimizedMcts { tables: QNTables::new(n_states), cfg },
            AgentConfig::QLearning(cfg) => Agent::QLearning { q: QTable::new(n_states), cfg },
            AgentConfig::PolicyMcts(cfg) => Agent::PolicyMcts { table: RolloutTable::new(n_states), cfg },
        }
    }

    pub fn run_episode<R: Rng + ?Sized>(
        &mut self,
        env: &mut FrozenLake,
        rng: &mut R,
        episode_index: u64,
    ) -> Result<EpisodeRecord, EnvError> {
        match self {
            Agent::OptimizedMcts { tables, cfg } => run_episode_optimized_mcts(env, tables, cfg, rng, episode_index),
            Agent::QLearning { q, cfg } => run_episode_qlearning(env, q, cfg, rng, episode_index),
            Agent::PolicyMcts { table, cfg } => run_episode_policy_mcts(env, table, cfg, rng, episode_index),
        }
    }

    pub fn greedy_policy(&self, map: &GridMap) -> PolicyVector {
        match self {
            Agent::OptimizedMcts { tables, .. } => greedy_policy(tables, map),
            Agent::QLearning { q, .. } => greedy_policy(q, map),
            Agent::PolicyMcts { table, .. } => greedy_policy(table, map),
        }
    }
}
