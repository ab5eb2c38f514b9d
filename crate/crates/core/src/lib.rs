//! Optimized Monte Carlo Tree Search for the slippery FrozenLake gridworld.
//!
//! The search keeps global cumulative-reward (`Q`) and visit-count (`N`)
//! tables indexed by `(state, action)` and picks actions with UCT. Two
//! baselines share the same per-episode interface: tabular Q-Learning and a
//! rollout-driven "MCTS with policy". An exact dynamic-programming oracle
//! over the true transition model provides the ground truth the learned
//! policies are checked against, and the `bench` module drives episodes,
//! computes metrics and writes CSV/text reports.

pub mod agents;
pub mod bench;
pub mod env;
pub mod oracle;
pub mod rng;
pub mod search;

pub use agents::{Agent, EpisodeRecord, PolicyMctsConfig, QLearnConfig};
pub use bench::{Algorithm, MetricsRow, RunConfig, RunOutput, Summary};
pub use env::{Action, Cell, EnvConfig, EnvError, FrozenLake, GridMap, StateId, StepOutcome};
pub use oracle::{Mdp, PolicyVector, ValueFunction};
pub use search::{QNTables, SearchConfig, UctValue};
