//! Transition dynamics, cost accounting and reward.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{enumerate_actions, Action, GridState, ObjectiveWeights, ScenarioParams};
use crate::error::{Error, Result};
use crate::money::Money;

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: GridState,
    pub reward: f64,
    pub action_cost_paid: Money,
    pub op_cost_paid: Money,
    /// Operating cost that could not be paid because the budget hit zero.
    pub op_shortfall: Money,
    pub demands_drawn: Vec<f64>,
}

/// State after the action's supply change and cost deduction, before the
/// demand refresh.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedAction {
    pub state: GridState,
    pub action_cost: Money,
    pub op_cost_paid: Money,
    pub op_shortfall: Money,
}

/// Operating cost of running every city's supply for one period, with an
/// optional supply change at `target`, times `op_cost_scale`.
pub fn operating_cost(
    state: &GridState,
    target: Option<usize>,
    delta_re: f64,
    delta_nre: f64,
    op_cost_scale: f64,
) -> Result<Money> {
    if let Some(t) = target {
        if t >= state.cities.len() {
            return Err(Error::InvalidArgument(format!("target city {t} out of range")));
        }
    } else if delta_re != 0.0 || delta_nre != 0.0 {
        return Err(Error::InvalidArgument("supply deltas given without a target city".into()));
    }
    let mut total = 0.0;
    for (j, city) in state.cities.iter().enumerate() {
        let (dr, dn) = if Some(j) == target { (delta_re, delta_nre) } else { (0.0, 0.0) };
        let re = city.re_supply + dr;
        let nre = city.nre_supply + dn;
        if re < 0.0 {
            return Err(Error::NegativeSupply { city: j, field: "re_supply", value: re });
        }
        if nre < 0.0 {
            return Err(Error::NegativeSupply { city: j, field: "nre_supply", value: nre });
        }
        total += city.re_op_cost * re + city.nre_op_cost * nre;
    }
    Ok(Money::from_f64(total * op_cost_scale))
}

/// Why `action` cannot be taken in `state`, if it cannot.
pub fn infeasibility(state: &GridState, action: Action, params: &ScenarioParams) -> Option<String> {
    if let Some(i) = action.city() {
        let Some(city) = state.cities.get(i) else {
            return Some(format!("city index {i} out of range for {} cities", state.cities.len()));
        };
        match action {
            Action::RemoveRe(_) if city.re_supply < params.re_increment => {
                return Some(format!(
                    "RE supply {} is below the removal increment {}",
                    city.re_supply, params.re_increment
                ));
            }
            Action::RemoveNre(_) if city.nre_supply < params.nre_increment => {
                return Some(format!(
                    "NRE supply {} is below the removal increment {}",
                    city.nre_supply, params.nre_increment
                ));
            }
            _ => {}
        }
    }
    let cost = action.capital_cost(params);
    if cost > state.budget {
        return Some(format!("action cost {cost} exceeds remaining budget {}", state.budget));
    }
    None
}

pub fn is_feasible(state: &GridState, action: Action, params: &ScenarioParams) -> bool {
    infeasibility(state, action, params).is_none()
}

/// Actions allowed in `state`, in enumeration order. `DoNothing` is always
/// present.
pub fn feasible_actions(state: &GridState, params: &ScenarioParams) -> Vec<Action> {
    let n = state.cities.len().max(1);
    enumerate_actions(n)
        .expect("n >= 1")
        .into_iter()
        .filter(|&a| a == Action::DoNothing || (a.city().is_some_and(|i| i < state.cities.len()) && is_feasible(state, a, params)))
        .collect()
}

/// Applies the supply change and deducts the capital cost plus the
/// operating cost of the post-action supplies. The budget is floored at zero;
/// any unpaid operating cost is reported as a shortfall.
pub fn apply_action(state: &GridState, action: Action, params: &ScenarioParams) -> Result<AppliedAction> {
    if let Some(reason) = infeasibility(state, action, params) {
        return Err(Error::Infeasible { action, reason });
    }
    let (delta_re, delta_nre) = action.supply_delta(params);
    let op_cost = operating_cost(state, action.city(), delta_re, delta_nre, params.op_cost_scale)?;
    let action_cost = action.capital_cost(params);

    let mut next = state.clone();
    if let Some(i) = action.city() {
        let city = &mut next.cities[i];
        city.re_supply += delta_re;
        city.nre_supply += delta_nre;
    }
    let after_capital = state.budget - action_cost;
    let op_cost_paid = op_cost.min(after_capital.max(Money::ZERO));
    let op_shortfall = op_cost - op_cost_paid;
    next.budget = after_capital - op_cost_paid;
    Ok(AppliedAction { state: next, action_cost, op_cost_paid, op_shortfall })
}

/// Draws every city's demand from `Normal(μ_i, σ_i²)` in city order,
/// clamped at zero.
pub fn sample_demands<R: Rng + ?Sized>(state: &GridState, rng: &mut R) -> Vec<f64> {
    state
        .cities
        .iter()
        .map(|c| {
            let z: f64 = StandardNormal.sample(rng);
            (c.baseline_demand + c.demand_stddev * z).max(0.0)
        })
        .collect()
}

/// Weighted objective on a post-transition state: remaining budget, unmet
/// low-income demand × population, and RE-served demand × population.
pub fn reward(state: &GridState, weights: &ObjectiveWeights) -> f64 {
    let mut underserved = 0.0;
    let mut re_served = 0.0;
    for c in &state.cities {
        if c.is_low_income() {
            underserved += c.unmet_demand() * c.population;
        }
        re_served += c.re_supply.min(c.demand) * c.population;
    }
    weights.budget_weight * state.budget.to_f64()
        + weights.underserved_penalty * underserved
        + weights.re_access_weight * re_served
}

/// One full transition: action, demand refresh, reward.
pub fn step<R: Rng + ?Sized>(
    state: &GridState,
    action: Action,
    rng: &mut R,
    params: &ScenarioParams,
) -> Result<StepOutcome> {
    step_with_weights(state, action, rng, params, &params.weights)
}

/// [`step`] with the reward evaluated under alternative weights.
pub fn step_with_weights<R: Rng + ?Sized>(
    state: &GridState,
    action: Action,
    rng: &mut R,
    params: &ScenarioParams,
    weights: &ObjectiveWeights,
) -> Result<StepOutcome> {
    let applied = apply_action(state, action, params)?;
    let mut next_state = applied.state;
    let demands_drawn = sample_demands(&next_state, rng);
    for (city, &d) in next_state.cities.iter_mut().zip(&demands_drawn) {
        city.demand = d;
    }
    let reward = reward(&next_state, weights);
    Ok(StepOutcome {
        next_state,
        reward,
        action_cost_paid: applied.action_cost,
        op_cost_paid: applied.op_cost_paid,
        op_shortfall: applied.op_shortfall,
        demands_drawn,
    })
}
