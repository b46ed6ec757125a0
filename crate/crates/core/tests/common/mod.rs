//! Fixtures and independent oracles shared by the integration tests and the
//! acceptance suite.
#![allow(dead_code)]

use equigrid::domain::{HIGH_INCOME, LOW_INCOME};
use equigrid::env::{feasible_actions, step};
use equigrid::solvers::{build_discrete_mdp, DiscreteMdp, DiscretizationSpec, MctsConfig};
use equigrid::{validate_scenario, Action, CityState, GridState, Money, ObjectiveWeights, Scenario, ScenarioParams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn city(name: &str, low_income: bool) -> CityState {
    CityState {
        name: name.into(),
        demand: 0.0,
        re_supply: 0.0,
        nre_supply: 0.0,
        population: 0.0,
        income_indicator: if low_income { LOW_INCOME } else { HIGH_INCOME },
        baseline_demand: 0.0,
        demand_stddev: 0.0,
        re_op_cost: 0.0,
        nre_op_cost: 0.0,
    }
}

pub fn params(budget: f64) -> ScenarioParams {
    ScenarioParams {
        initial_budget: Money::from_f64(budget),
        add_re_cost: Money::from_f64(180.0),
        add_nre_cost: Money::from_f64(120.0),
        remove_re_cost: Money::from_f64(120.0),
        remove_nre_cost: Money::from_f64(180.0),
        re_increment: 100.0,
        nre_increment: 100.0,
        gamma: 0.95,
        weights: ObjectiveWeights { budget_weight: 0.15, underserved_penalty: -25.0, re_access_weight: 12.0 },
        horizon: 10,
        op_cost_scale: 1.0,
        low_income_threshold: 0.25,
    }
}

/// One low-income city; two bins on each of budget, RE and NRE gives the
/// 8-state, 5-action abstraction.
pub fn toy_scenario() -> Scenario {
    let mut p = params(400.0);
    p.op_cost_scale = 0.1;
    let mut c = city("Toy", true);
    (c.population, c.baseline_demand, c.demand) = (1.0, 150.0, 150.0);
    (c.re_op_cost, c.nre_op_cost) = (0.2, 0.5);
    validate_scenario(p, vec![c]).unwrap()
}

pub fn toy_mdp() -> DiscreteMdp {
    let s = toy_scenario();
    let spec = DiscretizationSpec::for_scenario(&s, None, 2, 2).unwrap();
    build_discrete_mdp(&s, &spec).unwrap()
}

/// Two-step trap: adding RE first scores better immediately but leaves too
/// little budget to add NRE, so the low-income shortfall persists. Adding
/// NRE first, then RE, is optimal over two steps.
pub fn trap_scenario() -> Scenario {
    let mut p = params(305.0);
    p.weights = ObjectiveWeights { budget_weight: 0.01, underserved_penalty: -3.0, re_access_weight: 1.0 };
    p.horizon = 2;
    let mut c = city("Trap", true);
    (c.population, c.baseline_demand, c.demand, c.demand_stddev) = (10.0, 200.0, 200.0, 1.0);
    (c.re_op_cost, c.nre_op_cost) = (0.11, 0.0);
    validate_scenario(p, vec![c]).unwrap()
}

pub fn trap_mcts_config() -> MctsConfig {
    MctsConfig { iterations: 10_000, exploration_constant: std::f64::consts::SQRT_2, max_depth: 2, ..MctsConfig::default() }
}

/// Objective written out by hand: loops over cities and spells out every term
/// without sharing code with the library.
pub fn brute_force_reward(state: &GridState, w: &ObjectiveWeights) -> f64 {
    let budget = state.budget.cents() as f64 / 100.0;
    let mut total = w.budget_weight * budget;
    for c in &state.cities {
        let supply = c.re_supply + c.nre_supply;
        if c.income_indicator == LOW_INCOME && c.demand > supply {
            total += w.underserved_penalty * (c.demand - supply) * c.population;
        }
        let served = if c.re_supply < c.demand { c.re_supply } else { c.demand };
        total += w.re_access_weight * served * c.population;
    }
    total
}

pub fn random_state<R: Rng>(rng: &mut R) -> (GridState, ObjectiveWeights) {
    let n = rng.random_range(1..=8);
    let cities = (0..n)
        .map(|i| {
            let mut c = city(&format!("c{i}"), rng.random_bool(0.5));
            c.demand = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..5000.0) };
            c.re_supply = rng.random_range(0.0..3000.0);
            c.nre_supply = rng.random_range(0.0..3000.0);
            c.population = rng.random_range(0.0..10.0);
            c
        })
        .collect();
    let weights = ObjectiveWeights {
        budget_weight: rng.random_range(-1.0..1.0),
        underserved_penalty: rng.random_range(-50.0..0.0),
        re_access_weight: rng.random_range(0.0..50.0),
    };
    (GridState { budget: Money::from_cents(rng.random_range(0..1_000_000)), cities }, weights)
}

/// Exact value of a stationary policy: solves `(I − γP) v = r`.
pub fn evaluate_policy(mdp: &DiscreteMdp, gamma: f64, policy: &[usize]) -> Vec<f64> {
    let n = mdp.n_states();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut r = DVector::<f64>::zeros(n);
    for s in 0..n {
        r[s] = mdp.reward(s, policy[s]);
        for &(next, p) in mdp.row(s, policy[s]) {
            a[(s, next)] -= gamma * p;
        }
    }
    let v = a.lu().solve(&r).expect("I - γP is nonsingular for γ < 1");
    v.iter().copied().collect()
}

/// Optimal values and greedy actions by evaluating every deterministic
/// stationary policy that picks only feasible actions.
pub fn enumerate_optimal(mdp: &DiscreteMdp, gamma: f64) -> (Vec<f64>, Vec<usize>) {
    let n = mdp.n_states();
    let choices: Vec<Vec<usize>> =
        (0..n).map(|s| (0..mdp.n_actions()).filter(|&a| mdp.is_feasible(s, a)).collect()).collect();
    let mut digits = vec![0usize; n];
    let mut best = vec![f64::NEG_INFINITY; n];
    loop {
        let policy: Vec<usize> = (0..n).map(|s| choices[s][digits[s]]).collect();
        let v = evaluate_policy(mdp, gamma, &policy);
        for s in 0..n {
            best[s] = best[s].max(v[s]);
        }
        let mut k = 0;
        while k < n {
            digits[k] += 1;
            if digits[k] < choices[k].len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    // Greedy action against the optimal values: highest Q, earliest index
    // among exact ties.
    let greedy = (0..n)
        .map(|s| {
            let q = |a: usize| {
                mdp.reward(s, a) + gamma * mdp.row(s, a).iter().map(|&(t, p)| p * best[t]).sum::<f64>()
            };
            let mut arg = choices[s][0];
            for &a in &choices[s][1..] {
                if q(a) > q(arg) + 1e-9 * q(arg).abs().max(1.0) {
                    arg = a;
                }
            }
            arg
        })
        .collect();
    (best, greedy)
}

/// Expected discounted return of every first action on the trap scenario,
/// maximizing over the second action, with demand integrated over `points`
/// equiprobable normal quantiles.
pub fn trap_first_action_values(scenario: &Scenario, points: usize) -> Vec<(Action, f64)> {
    let p = &scenario.params;
    let s0 = scenario.initial_state();
    let quantiles: Vec<Vec<f64>> = s0
        .cities
        .iter()
        .map(|c| {
            if c.demand_stddev == 0.0 {
                return vec![c.baseline_demand];
            }
            let dist = Normal::new(c.baseline_demand, c.demand_stddev).unwrap();
            (0..points).map(|k| dist.inverse_cdf((k as f64 + 0.5) / points as f64).max(0.0)).collect()
        })
        .collect();
    assert_eq!(s0.cities.len(), 1, "trap oracle handles one city");
    let expect = |state: &GridState, action: Action| -> Vec<(f64, GridState)> {
        // Dynamics do not depend on demand, so apply once with a throwaway rng
        // and then substitute each quantile.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = step(state, action, &mut rng, p).unwrap();
        quantiles[0]
            .iter()
            .map(|&d| {
                let mut next = out.next_state.clone();
                next.cities[0].demand = d;
                (equigrid::env::reward(&next, &p.weights), next)
            })
            .collect()
    };
    feasible_actions(&s0, p)
        .into_iter()
        .map(|a0| {
            let outcomes = expect(&s0, a0);
            let mut total = 0.0;
            for (r0, s1) in &outcomes {
                let best_next = feasible_actions(s1, p)
                    .into_iter()
                    .map(|a1| {
                        let o = expect(s1, a1);
                        o.iter().map(|x| x.0).sum::<f64>() / o.len() as f64
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                total += r0 + p.gamma * best_next;
            }
            (a0, total / outcomes.len() as f64)
        })
        .collect()
}

pub fn trap_optimal_first_action(scenario: &Scenario) -> Action {
    let values = trap_first_action_values(scenario, 101);
    values.iter().copied().fold((Action::DoNothing, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a }).0
}
