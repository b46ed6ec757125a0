//! Jacobi value iteration and the online lookup for its greedy policy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Action, GridState, ScenarioParams};
use crate::env::is_feasible;
use crate::error::{Error, Result};
use crate::solvers::discretize::DiscreteMdp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTables {
    pub values: Vec<f64>,
    /// Greedy action index per state.
    pub policy: Vec<usize>,
    /// Max-norm change of the last sweep.
    pub residual: f64,
    pub sweeps: usize,
    /// Residual after each sweep, in order.
    pub residual_history: Vec<f64>,
}

/// Relative slack under which two Q-values count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

fn q_value(mdp: &DiscreteMdp, values: &[f64], gamma: f64, s: usize, a: usize) -> f64 {
    let future: f64 = mdp.row(s, a).iter().map(|&(next, p)| p * values[next]).sum();
    mdp.reward(s, a) + gamma * future
}

/// First feasible action (in index order) whose Q-value is within
/// tolerance of the best.
pub fn greedy_action(mdp: &DiscreteMdp, values: &[f64], gamma: f64, s: usize) -> usize {
    let qs: Vec<(usize, f64)> =
        (0..mdp.n_actions()).filter(|&a| mdp.is_feasible(s, a)).map(|a| (a, q_value(mdp, values, gamma, s, a))).collect();
    let best = qs.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
    let slack = TIE_TOLERANCE * best.abs().max(1.0);
    qs.iter().find(|q| q.1 >= best - slack).map(|q| q.0).expect("every state has a feasible action")
}

/// Bellman optimality sweeps until the max-norm residual is at most
/// `tolerance` or `max_sweeps` is reached. Each sweep reads only the previous
/// sweep's values, so the result does not depend on the worker count.
pub fn value_iteration(mdp: &DiscreteMdp, gamma: f64, tolerance: f64, max_sweeps: usize) -> Result<ValueTables> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let mut values = vec![0.0; mdp.n_states()];
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    while history.len() < max_sweeps {
        let next: Vec<f64> = (0..mdp.n_states())
            .into_par_iter()
            .map(|s| {
                (0..mdp.n_actions())
                    .filter(|&a| mdp.is_feasible(s, a))
                    .map(|a| q_value(mdp, &values, gamma, s, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        if let Some(s) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { state: s, phase: "value iteration sweep" });
        }
        residual = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        history.push(residual);
        values = next;
        if residual <= tolerance {
            break;
        }
    }
    let policy = (0..mdp.n_states()).map(|s| greedy_action(mdp, &values, gamma, s)).collect();
    Ok(ValueTables { values, policy, residual, sweeps: history.len(), residual_history: history })
}

/// A solved abstraction ready for online lookups on concrete states.
#[derive(Debug, Clone)]
pub struct ViPolicyTables {
    pub mdp: DiscreteMdp,
    pub tables: ValueTables,
    pub gamma: f64,
}

/// Chosen action plus whether the lookup had to clamp or fall back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViLookup {
    pub action: Action,
    pub clamped: bool,
    /// The table action was infeasible in the concrete state and the best
    /// feasible alternative was used instead.
    pub fallback: bool,
}

impl ViPolicyTables {
    pub fn solve(mdp: DiscreteMdp, gamma: f64, tolerance: f64, max_sweeps: usize) -> Result<ViPolicyTables> {
        if mdp.abstraction().is_none() {
            return Err(Error::InvalidArgument("value-iteration lookup needs an MDP built from a scenario".into()));
        }
        let tables = value_iteration(&mdp, gamma, tolerance, max_sweeps)?;
        Ok(ViPolicyTables { mdp, tables, gamma })
    }

    /// Greedy action for a concrete state of the full scenario. Out-of-range
    /// coordinates clamp to the nearest bin. If the table action is not
    /// feasible in the concrete state, the next-best feasible action by
    /// Q-value is returned, ending at `DoNothing`.
    pub fn action_for(&self, state: &GridState, params: &ScenarioParams) -> ViLookup {
        let abs = self.mdp.abstraction().expect("checked in solve");
        let (s, clamped) = abs.locate(state);
        let preferred = abs.lift(abs.actions[self.tables.policy[s]]);
        if is_feasible(state, preferred, params) {
            return ViLookup { action: preferred, clamped, fallback: false };
        }
        let mut ranked: Vec<(usize, f64)> = (0..self.mdp.n_actions())
            .filter(|&a| self.mdp.is_feasible(s, a))
            .map(|a| (a, q_value(&self.mdp, &self.tables.values, self.gamma, s, a)))
            .collect();
        // Stable sort keeps enumeration order among equal values.
        ranked.sort_by(|x, y| y.1.total_cmp(&x.1));
        let action = ranked
            .into_iter()
            .map(|(a, _)| abs.lift(abs.actions[a]))
            .find(|&a| is_feasible(state, a, params))
            .unwrap_or(Action::DoNothing);
        ViLookup { action, clamped, fallback: true }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Money;
    use crate::scenario_file::default_scenario;
    use crate::solvers::discretize::tests::{toy_scenario, toy_spec};
    use crate::solvers::discretize::{build_discrete_mdp, DiscretizationSpec};

    fn self_loop(r: f64) -> DiscreteMdp {
        DiscreteMdp::from_tables(vec![vec![vec![(0, 1.0)]]], vec![vec![r]]).unwrap()
    }

    #[test]
    fn zero_reward_self_loop() {
        let t = value_iteration(&self_loop(0.0), 0.95, 1e-12, 10_000).unwrap();
        assert_eq!(t.values, vec![0.0]);
    }

    #[test]
    fn unit_reward_self_loop_is_geometric_series() {
        let t = value_iteration(&self_loop(1.0), 0.95, 1e-10, 100_000).unwrap();
        assert!((t.values[0] - 20.0).abs() < 1e-6, "{}", t.values[0]);
        assert!(t.residual <= 1e-10);
    }

    #[test]
    fn rejects_bad_gamma() {
        assert!(value_iteration(&self_loop(1.0), 1.0, 1e-9, 10).is_err());
    }

    #[test]
    fn non_finite_values_are_reported() {
        let mdp = self_loop(f64::MAX);
        match value_iteration(&mdp, 0.99, 1e-9, 10) {
            Err(Error::NonFinite { state: 0, .. }) => {}
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn residual_shrinks() {
        let s = toy_scenario();
        let mdp = build_discrete_mdp(&s, &toy_spec(&s)).unwrap();
        let t = value_iteration(&mdp, 0.95, 1e-10, 10_000).unwrap();
        let h = &t.residual_history;
        for k in 1..h.len() / 2 {
            assert!(h[2 * k - 1] <= h[k - 1] + 1e-12, "sweep {} residual {} > sweep {} residual {}", 2 * k, h[2 * k - 1], k, h[k - 1]);
        }
        assert!(t.residual <= 1e-10);
    }

    fn solved_default() -> ViPolicyTables {
        let s = default_scenario();
        let spec = DiscretizationSpec::for_scenario(&s, Some(vec![1, 2]), 6, 4).unwrap();
        let mdp = build_discrete_mdp(&s, &spec).unwrap();
        ViPolicyTables::solve(mdp, s.params.gamma, 1e-9, 10_000).unwrap()
    }

    #[test]
    fn lookup_at_midpoint_matches_table() {
        let s = default_scenario();
        let vi = solved_default();
        let abs = vi.mdp.abstraction().unwrap();
        let mut state = s.initial_state();
        // Budget bin 5 of 6 over [0, 3000] has midpoint 2750.
        state.budget = Money::from_f64(2750.0);
        let (idx, clamped) = abs.locate(&state);
        assert!(!clamped);
        let look = vi.action_for(&state, &s.params);
        assert_eq!(look.action, abs.lift(abs.actions[vi.tables.policy[idx]]));
        assert!(!look.fallback);

        let mut other = state.clone();
        other.budget = Money::from_f64(2600.0);
        assert_eq!(vi.action_for(&other, &s.params).action, look.action);
    }

    #[test]
    fn out_of_range_budget_is_clamped() {
        let s = default_scenario();
        let vi = solved_default();
        let mut state = s.initial_state();
        state.budget = Money::from_f64(30_000.0);
        let look = vi.action_for(&state, &s.params);
        assert!(look.clamped);
        assert!(is_feasible(&state, look.action, &s.params));
    }
}
