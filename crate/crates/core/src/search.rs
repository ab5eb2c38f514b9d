//! Global Q/N tables and UCT action selection.
//!
//! The search "tree" for a small discrete MDP is flattened into two tables
//! indexed by `(state, action)`: the cumulative episode return credited to
//! the pair and the number of times it was taken. The state visit count used
//! by UCT is the row sum of the visit table.

use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::env::{Action, StateId};

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("invalid counts: n_sa = {n_sa} exceeds n_s = {n_s}")]
    InvalidCounts { n_sa: u64, n_s: u64 },
    #[error("exploration weight must be finite and positive, got {0}")]
    InvalidExplorationWeight(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub exploration_weight: f64,
}

impl SearchConfig {
    pub fn new(exploration_weight: f64) -> Result<SearchConfig, SearchError> {
        if !(exploration_weight.is_finite() && exploration_weight > 0.0) {
            return Err(SearchError::InvalidExplorationWeight(exploration_weight));
        }
        Ok(SearchConfig { exploration_weight })
    }
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { exploration_weight: 1.4 }
    }
}

/// UCT score of one action. `Unvisited` orders above every finite score.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum UctValue {
    Finite(f64),
    Unvisited,
}

/// `q_sum / n_sa + c * sqrt(ln(n_s) / n_sa)`, or `Unvisited` when `n_sa == 0`.
pub fn uct_value(q_sum: f64, n_sa: u64, n_s: u64, c: f64) -> Result<UctValue, SearchError> {
    if n_sa > n_s {
        return Err(SearchError::InvalidCounts { n_sa, n_s });
    }
    if n_sa == 0 {
        return Ok(UctValue::Unvisited);
    }
    let n = n_sa as f64;
    let mean = q_sum / n;
    if c == 0.0 {
        return Ok(UctValue::Finite(mean));
    }
    Ok(UctValue::Finite(mean + c * ((n_s as f64).ln() / n).sqrt()))
}

/// Cumulative return `Q(s,a)` and visit count `N(s,a)` for every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QNTables {
    n_states: usize,
    q_sum: Vec<f64>,
    n_sa: Vec<u64>,
}

impl QNTables {
    pub fn new(n_states: usize) -> QNTables {
        QNTables {
            n_states,
            q_sum: vec![0.0; n_states * Action::COUNT],
            n_sa: vec![0; n_states * Action::COUNT],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    fn idx(s: StateId, a: Action) -> usize {
        s.0 * Action::COUNT + a.index()
    }

    pub fn q_sum(&self, s: StateId, a: Action) -> f64 {
        self.q_sum[Self::idx(s, a)]
    }

    pub fn n_sa(&self, s: StateId, a: Action) -> u64 {
        self.n_sa[Self::idx(s, a)]
    }

    /// `N(s) = sum over a of N(s,a)`.
    pub fn n_s(&self, s: StateId) -> u64 {
        let base = s.0 * Action::COUNT;
        self.n_sa[base..base + Action::COUNT].iter().sum()
    }

    /// Empirical mean return, `None` for unvisited pairs.
    pub fn mean(&self, s: StateId, a: Action) -> Option<f64> {
        let n = self.n_sa(s, a);
        (n > 0).then(|| self.q_sum(s, a) / n as f64)
    }

    /// Sets one entry directly. Used to seed tables in tests and tools.
    pub fn set(&mut self, s: StateId, a: Action, q_sum: f64, n_sa: u64) {
        let i = Self::idx(s, a);
        self.q_sum[i] = q_sum;
        self.n_sa[i] = n_sa;
    }

    /// Every-visit backup: each occurrence of `(s, a)` in `path` adds
    /// `episode_return` to `Q(s,a)` and one to `N(s,a)`.
    pub fn backpropagate(&mut self, path: &[(StateId, Action)], episode_return: f64) {
        for &(s, a) in path {
            let i = Self::idx(s, a);
            self.q_sum[i] += episode_return;
            self.n_sa[i] += 1;
        }
    }

    pub fn uct(&self, s: StateId, a: Action, c: f64) -> UctValue {
        uct_value(self.q_sum(s, a), self.n_sa(s, a), self.n_s(s), c)
            .expect("row sum always bounds a single count")
    }

    /// Dumps the tables as CSV with header `state,action,q_sum,n_sa`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "state,action,q_sum,n_sa")?;
        for s in 0..self.n_states {
            for a in Action::ALL {
                let i = Self::idx(StateId(s), a);
                writeln!(w, "{s},{},{},{}", a.index(), self.q_sum[i], self.n_sa[i])?;
            }
        }
        Ok(())
    }
}

/// Picks the UCT-maximizing action at `s`. Unvisited actions win outright;
/// ties (among unvisited actions or equal finite scores) are broken uniformly
/// at random from `rng`.
pub fn select_action<R: Rng + ?Sized>(
    tables: &QNTables,
    s: StateId,
    cfg: &SearchConfig,
    rng: &mut R,
) -> Action {
    let n_s = tables.n_s(s);
    let mut best = [Action::Left; Action::COUNT];
    let mut n_best = 0;
    let mut best_value = UctValue::Finite(f64::NEG_INFINITY);
    for a in Action::ALL {
        let v = uct_value(tables.q_sum(s, a), tables.n_sa(s, a), n_s, cfg.exploration_weight)
            .expect("row sum always bounds a single count");
        if v > best_value {
            best_value = v;
            best[0] = a;
            n_best = 1;
        } else if v == best_value {
            best[n_best] = a;
            n_best += 1;
        }
    }
    pick(&best[..n_best], rng)
}

pub(crate) fn pick<R: Rng + ?Sized>(candidates: &[Action], rng: &mut R) -> Action {
    match candidates {
        [only] => *only,
        many => many[rng.random_range(0..many.len())],
    }
}
