//! Exact dynamic-programming ground truth over the true FrozenLake model.
//!
//! Rewards are earned on entering a cell (1 on a goal, 0 elsewhere) and
//! terminal cells are absorbing with no further reward, so the discounted
//! value of a start state with an immediate goal is 1.

use thiserror::Error;

use crate::env::{transition_distribution, Action, Cell, EnvConfig, FrozenLake, GridMap, StateId};
use crate::rng::episode_rng;

/// Iteration cap for value iteration and policy evaluation.
pub const MAX_SWEEPS: usize = 1_000_000;

/// Two greedy candidates closer than this are treated as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("no convergence after {sweeps} sweeps (residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },
    #[error("discount factor must lie in [0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("policy has no action for non-terminal state {0}")]
    UndefinedPolicy(StateId),
    #[error("policy covers {got} states, MDP has {expected}")]
    PolicySize { expected: usize, got: usize },
}

/// Tabular model: per non-terminal `(s, a)` a list of `(next, probability)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    start: StateId,
    transitions: Vec<[Vec<(StateId, f64)>; Action::COUNT]>,
    terminal_reward: Vec<f64>,
    terminal_mask: Vec<bool>,
}

impl Mdp {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        Action::COUNT
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    /// Empty for terminal states.
    pub fn transitions(&self, s: StateId, a: Action) -> &[(StateId, f64)] {
        &self.transitions[s.0][a.index()]
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.terminal_mask[s.0]
    }

    pub fn terminal_reward(&self, s: StateId) -> f64 {
        self.terminal_reward[s.0]
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.n_states).map(StateId)
    }

    /// One-step lookahead `sum p(s') [r(s') + gamma V(s')]`.
    fn q_value(&self, values: &[f64], s: StateId, a: Action, gamma: f64) -> f64 {
        self.transitions(s, a)
            .iter()
            .map(|&(t, p)| p * (self.terminal_reward[t.0] + gamma * values[t.0]))
            .sum()
    }

    fn greedy_action(&self, values: &[f64], s: StateId, gamma: f64) -> (Action, f64) {
        // Value is the exact max; the action is the lowest index within
        // TIE_TOLERANCE of the running best.
        let first = self.q_value(values, s, Action::Left, gamma);
        let (mut action, mut chosen, mut max) = (Action::Left, first, first);
        for a in &Action::ALL[1..] {
            let q = self.q_value(values, s, *a, gamma);
            if q > chosen + TIE_TOLERANCE {
                action = *a;
                chosen = q;
            }
            max = max.max(q);
        }
        (action, max)
    }
}

pub fn build_mdp(map: &GridMap, slippery: bool) -> Mdp {
    let n = map.n_states();
    let mut transitions = Vec::with_capacity(n);
    for s in map.states() {
        let row: [Vec<(StateId, f64)>; Action::COUNT] = if map.is_terminal(s) {
            Default::default()
        } else {
            Action::ALL.map(|a| {
                transition_distribution(map, slippery, s, a).expect("state checked non-terminal")
            })
        };
        transitions.push(row);
    }
    Mdp {
        n_states: n,
        start: map.start(),
        transitions,
        terminal_reward: map.cells().iter().map(|c| if *c == Cell::Goal { 1.0 } else { 0.0 }).collect(),
        terminal_mask: map.cells().iter().map(|c| c.is_terminal()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn get(&self, s: StateId) -> f64 {
        self.values[s.0]
    }
}

/// An action for every non-terminal state; `None` on terminal states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyVector {
    actions: Vec<Option<Action>>,
}

impl PolicyVector {
    pub fn new(actions: Vec<Option<Action>>) -> PolicyVector {
        PolicyVector { actions }
    }

    pub fn from_fn(map: &GridMap, mut f: impl FnMut(StateId) -> Action) -> PolicyVector {
        PolicyVector {
            actions: map.states().map(|s| (!map.is_terminal(s)).then(|| f(s))).collect(),
        }
    }

    /// Same action everywhere.
    pub fn constant(map: &GridMap, a: Action) -> PolicyVector {
        PolicyVector::from_fn(map, |_| a)
    }

    pub fn get(&self, s: StateId) -> Option<Action> {
        self.actions.get(s.0).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[Option<Action>] {
        &self.actions
    }

    fn check(&self, mdp: &Mdp) -> Result<(), OracleError> {
        if self.actions.len() != mdp.n_states {
            return Err(OracleError::PolicySize { expected: mdp.n_states, got: self.actions.len() });
        }
        match mdp.states().find(|s| !mdp.is_terminal(*s) && self.get(*s).is_none()) {
            Some(s) => Err(OracleError::UndefinedPolicy(s)),
            None => Ok(()),
        }
    }

    /// Arrow grid, `H`/`G` on terminal cells.
    pub fn render(&self, map: &GridMap) -> String {
        let mut out = String::new();
        for s in map.states() {
            if s.0 > 0 && s.0 % map.cols() == 0 {
                out.push('\n');
            }
            out.push(match (map.cell(s), self.get(s)) {
                (Cell::Hole, _) => 'H',
                (Cell::Goal, _) => 'G',
                (_, Some(a)) => a.arrow(),
                (_, None) => '?',
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIterationResult {
    pub values: ValueFunction,
    pub policy: PolicyVector,
    /// Sup-norm change of each sweep; the last entry is below the tolerance.
    pub residuals: Vec<f64>,
}

fn check_gamma_tol(gamma: f64, tol: f64) -> Result<(), OracleError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(OracleError::InvalidGamma(gamma));
    }
    if !(tol > 0.0) {
        return Err(OracleError::InvalidTolerance(tol));
    }
    Ok(())
}

/// Synchronous value iteration until the sup-norm update is below `tol`.
/// The returned policy is greedy in the returned values with ties going to
/// the lowest action index.
pub fn value_iteration(mdp: &Mdp, gamma: f64, tol: f64) -> Result<ValueIterationResult, OracleError> {
    check_gamma_tol(gamma, tol)?;
    let mut values = vec![0.0; mdp.n_states];
    let mut next = values.clone();
    let mut residuals = Vec::new();
    for _ in 0..MAX_SWEEPS {
        let mut residual: f64 = 0.0;
        for s in mdp.states() {
            next[s.0] = if mdp.is_terminal(s) { 0.0 } else { mdp.greedy_action(&values, s, gamma).1 };
            residual = residual.max((next[s.0] - values[s.0]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        residuals.push(residual);
        if residual < tol {
            let policy = greedy_from_values(mdp, &values, gamma);
            return Ok(ValueIterationResult { values: ValueFunction { values }, policy, residuals });
        }
    }
    Err(OracleError::NonConvergence { sweeps: MAX_SWEEPS, residual: *residuals.last().unwrap_or(&f64::NAN) })
}

/// Greedy policy with respect to `values` (lowest index on ties).
pub fn greedy_from_values(mdp: &Mdp, values: &[f64], gamma: f64) -> PolicyVector {
    PolicyVector {
        actions: mdp
            .states()
            .map(|s| (!mdp.is_terminal(s)).then(|| mdp.greedy_action(values, s, gamma).0))
            .collect(),
    }
}

/// Discounted value of a fixed policy by iterative evaluation.
pub fn policy_evaluation(
    mdp: &Mdp,
    policy: &PolicyVector,
    gamma: f64,
    tol: f64,
) -> Result<ValueFunction, OracleError> {
    check_gamma_tol(gamma, tol)?;
    policy.check(mdp)?;
    let mut values = vec![0.0; mdp.n_states];
    let mut next = values.clone();
    for _ in 0..MAX_SWEEPS {
        let mut residual: f64 = 0.0;
        for s in mdp.states() {
            next[s.0] = match policy.get(s) {
                Some(a) if !mdp.is_terminal(s) => mdp.q_value(&values, s, a, gamma),
                _ => 0.0,
            };
            residual = residual.max((next[s.0] - values[s.0]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        if residual < tol {
            return Ok(ValueFunction { values });
        }
    }
    Err(OracleError::NonConvergence { sweeps: MAX_SWEEPS, residual: f64::NAN })
}

/// Probability of reaching a goal from every state within `horizon` steps
/// under `policy`, by backward induction over time.
pub fn finite_horizon_success_all(
    mdp: &Mdp,
    policy: &PolicyVector,
    horizon: usize,
) -> Result<Vec<f64>, OracleError> {
    policy.check(mdp)?;
    let base: Vec<f64> = mdp.states().map(|s| mdp.terminal_reward(s)).collect();
    let mut reach = base.clone();
    // After t iterations reach[s] = P(goal within t steps | start in s).
    for (s, v) in reach.iter_mut().enumerate() {
        if !mdp.is_terminal(StateId(s)) {
            *v = 0.0;
        }
    }
    let mut next = reach.clone();
    for _ in 0..horizon {
        for s in mdp.states() {
            next[s.0] = match policy.get(s) {
                Some(a) if !mdp.is_terminal(s) => {
                    mdp.transitions(s, a).iter().map(|&(t, p)| p * reach[t.0]).sum()
                }
                _ => base[s.0],
            };
        }
        std::mem::swap(&mut reach, &mut next);
    }
    Ok(reach)
}

/// Exact probability of reaching a goal from the start within `horizon` steps.
pub fn finite_horizon_success(mdp: &Mdp, policy: &PolicyVector, horizon: usize) -> Result<f64, OracleError> {
    Ok(finite_horizon_success_all(mdp, policy, horizon)?[mdp.start.0])
}

/// Monte Carlo success rate of `policy` on fresh episodes of `config`.
/// Episode `k` uses stream `k` of `seed`.
pub fn evaluate_policy_empirically(
    config: &EnvConfig,
    policy: &PolicyVector,
    episodes: u64,
    seed: u64,
) -> Result<f64, OracleError> {
    let map = &config.map;
    if let Some(s) = map.states().find(|s| !map.is_terminal(*s) && policy.get(*s).is_none()) {
        return Err(OracleError::UndefinedPolicy(s));
    }
    let mut env = FrozenLake::new(config.clone());
    let mut successes = 0u64;
    for k in 0..episodes {
        let mut rng = episode_rng(seed, k);
        let mut s = env.reset();
        loop {
            let a = policy.get(s).expect("checked above");
            let out = env.step(a, &mut rng).expect("episode still running");
            s = out.next_state;
            if out.terminal || out.truncated {
                successes += (out.reward == 1.0) as u64;
                break;
            }
        }
    }
    Ok(successes as f64 / episodes.max(1) as f64)
}

/// Optimal reference: value-iteration policy and its exact finite-horizon
/// success probability.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub values: ValueFunction,
    pub policy: PolicyVector,
    pub optimal_success: f64,
}

pub fn solve(map: &GridMap, slippery: bool, gamma: f64, horizon: usize) -> Result<OracleReport, OracleError> {
    let mdp = build_mdp(map, slippery);
    let vi = value_iteration(&mdp, gamma, 1e-12)?;
    let optimal_success = finite_horizon_success(&mdp, &vi.policy, horizon)?;
    Ok(OracleReport { values: vi.values, policy: vi.policy, optimal_success })
}
