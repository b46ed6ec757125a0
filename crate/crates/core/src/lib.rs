//! Equity-aware renewable energy allocation as a Markov decision process.
//!
//! The crate models a planner distributing renewable (RE) and non-renewable
//! (NRE) generation across cities under a shared budget. It provides:
//!
//! - [`domain`]: state, action and parameter types;
//! - [`env`]: transition dynamics, cost accounting and the reward;
//! - [`solvers`]: tabular value iteration on a discretized abstraction and
//!   Monte Carlo tree search with chance nodes;
//! - [`policies`]: baseline decision rules behind one interface;
//! - [`eval`]: seeded episode runs, metrics and benchmark tables;
//! - [`report`]: CSV/JSON emitters for results, traces and per-step series.

pub mod domain;
pub mod env;
pub mod error;
pub mod eval;
pub mod money;
pub mod policies;
pub mod report;
pub mod scenario_file;
pub mod solvers;

pub use domain::{
    enumerate_actions, income_class, validate_scenario, Action, ActionKind, CityState, GridState, ObjectiveWeights,
    Scenario, ScenarioParams,
};
pub use error::{Error, Result, ValidationReport, Violation};
pub use money::Money;
pub use scenario_file::{default_scenario, load_scenario, ScenarioDoc};
