//! Planning solvers: value iteration over a discretized abstraction and
//! Monte Carlo tree search.

pub mod discretize;
pub mod mcts;
pub mod vi;

pub use discretize::{build_discrete_mdp, Bins, DemandMode, DiscreteMdp, DiscretizationSpec, DEFAULT_STATE_CAP};
pub use mcts::{mcts_search, mcts_search_with_stats, rollout_estimate, MctsConfig, RolloutPolicy, SearchStats};
pub use vi::{value_iteration, ViPolicyTables, ValueTables};
