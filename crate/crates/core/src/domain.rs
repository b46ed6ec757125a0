//! MDP state, action and parameter types, plus scenario validation.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationReport};
use crate::money::Money;

/// Low-income flag value (`I_i = 0`).
pub const LOW_INCOME: u8 = 0;
/// High/medium-income flag value (`I_i = 1`).
pub const HIGH_INCOME: u8 = 1;

/// One region's slice of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityState {
    pub name: Arc<str>,
    /// Current-period demand, redrawn every step.
    pub demand: f64,
    pub re_supply: f64,
    pub nre_supply: f64,
    pub population: f64,
    /// `0` = low income, `1` = high/medium income.
    pub income_indicator: u8,
    pub baseline_demand: f64,
    pub demand_stddev: f64,
    pub re_op_cost: f64,
    pub nre_op_cost: f64,
}

impl CityState {
    pub fn is_low_income(&self) -> bool {
        self.income_indicator == LOW_INCOME
    }

    pub fn total_supply(&self) -> f64 {
        self.re_supply + self.nre_supply
    }

    /// `max(0, d - (r + n))`.
    pub fn unmet_demand(&self) -> f64 {
        (self.demand - self.total_supply()).max(0.0)
    }

    fn validate_into(&self, report: &mut ValidationReport) {
        let subject = format!("city '{}'", self.name);
        let non_negative = [
            ("demand", self.demand),
            ("re_supply", self.re_supply),
            ("nre_supply", self.nre_supply),
            ("population", self.population),
            ("baseline_demand", self.baseline_demand),
            ("demand_stddev", self.demand_stddev),
            ("re_op_cost", self.re_op_cost),
            ("nre_op_cost", self.nre_op_cost),
        ];
        for (field, value) in non_negative {
            if !value.is_finite() {
                report.push(&subject, field, format!("must be finite, got {value}"));
            } else if value < 0.0 {
                report.push(&subject, field, format!("must be >= 0, got {value}"));
            }
        }
        if self.income_indicator > 1 {
            report.push(
                &subject,
                "income_indicator",
                format!("must be 0 or 1, got {}", self.income_indicator),
            );
        }
    }
}

/// The MDP state: remaining budget and the fixed, ordered set of cities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    pub budget: Money,
    pub cities: Vec<CityState>,
}

impl GridState {
    pub fn city_count(&self) -> usize {
        self.cities.len()
    }

    pub fn demands(&self) -> Vec<f64> {
        self.cities.iter().map(|c| c.demand).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    DoNothing,
    AddRe,
    AddNre,
    RemoveRe,
    RemoveNre,
}

impl ActionKind {
    /// Facility kinds in per-city enumeration order.
    pub const FACILITY: [ActionKind; 4] =
        [ActionKind::AddRe, ActionKind::AddNre, ActionKind::RemoveRe, ActionKind::RemoveNre];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::DoNothing => "DoNothing",
            ActionKind::AddRe => "AddRE",
            ActionKind::AddNre => "AddNRE",
            ActionKind::RemoveRe => "RemoveRE",
            ActionKind::RemoveNre => "RemoveNRE",
        }
    }
}

/// A planner decision. City indices are zero-based positions in
/// [`GridState::cities`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    DoNothing,
    AddRe(usize),
    AddNre(usize),
    RemoveRe(usize),
    RemoveNre(usize),
}

impl Action {
    pub fn new(kind: ActionKind, city: usize) -> Action {
        match kind {
            ActionKind::DoNothing => Action::DoNothing,
            ActionKind::AddRe => Action::AddRe(city),
            ActionKind::AddNre => Action::AddNre(city),
            ActionKind::RemoveRe => Action::RemoveRe(city),
            ActionKind::RemoveNre => Action::RemoveNre(city),
        }
    }

    pub fn kind(self) -> ActionKind {
        match self {
            Action::DoNothing => ActionKind::DoNothing,
            Action::AddRe(_) => ActionKind::AddRe,
            Action::AddNre(_) => ActionKind::AddNre,
            Action::RemoveRe(_) => ActionKind::RemoveRe,
            Action::RemoveNre(_) => ActionKind::RemoveNre,
        }
    }

    pub fn city(self) -> Option<usize> {
        match self {
            Action::DoNothing => None,
            Action::AddRe(i) | Action::AddNre(i) | Action::RemoveRe(i) | Action::RemoveNre(i) => Some(i),
        }
    }

    /// Position in [`enumerate_actions`] order.
    pub fn index(self) -> usize {
        match self {
            Action::DoNothing => 0,
            Action::AddRe(i) => 1 + 4 * i,
            Action::AddNre(i) => 2 + 4 * i,
            Action::RemoveRe(i) => 3 + 4 * i,
            Action::RemoveNre(i) => 4 + 4 * i,
        }
    }

    /// Signed (ΔRE, ΔNRE) supply change at the acted city.
    pub fn supply_delta(self, params: &ScenarioParams) -> (f64, f64) {
        match self {
            Action::DoNothing => (0.0, 0.0),
            Action::AddRe(_) => (params.re_increment, 0.0),
            Action::AddNre(_) => (0.0, params.nre_increment),
            Action::RemoveRe(_) => (-params.re_increment, 0.0),
            Action::RemoveNre(_) => (0.0, -params.nre_increment),
        }
    }

    /// Capital cost of the action (add/remove), excluding operating costs.
    pub fn capital_cost(self, params: &ScenarioParams) -> Money {
        match self {
            Action::DoNothing => Money::ZERO,
            Action::AddRe(_) => params.add_re_cost,
            Action::AddNre(_) => params.add_nre_cost,
            Action::RemoveRe(_) => params.remove_re_cost,
            Action::RemoveNre(_) => params.remove_nre_cost,
        }
    }

    /// Same action with its city index remapped.
    pub fn with_city(self, city: usize) -> Action {
        Action::new(self.kind(), city)
    }

    /// Human-readable label using city names, e.g. `AddRE@Memphis`.
    pub fn label(self, cities: &[CityState]) -> String {
        match self.city() {
            None => self.kind().as_str().to_string(),
            Some(i) => match cities.get(i) {
                Some(c) => format!("{}@{}", self.kind().as_str(), c.name),
                None => self.to_string(),
            },
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.city() {
            None => f.write_str(self.kind().as_str()),
            Some(i) => write!(f, "{}@{}", self.kind().as_str(), i),
        }
    }
}

/// All `4n + 1` actions for `n` cities: `DoNothing` first, then per city
/// `AddRE, AddNRE, RemoveRE, RemoveNRE`.
pub fn enumerate_actions(n: usize) -> Result<Vec<Action>> {
    if n == 0 {
        return Err(Error::InvalidArgument("city count must be at least 1".into()));
    }
    let mut actions = Vec::with_capacity(4 * n + 1);
    actions.push(Action::DoNothing);
    for city in 0..n {
        actions.extend(ActionKind::FACILITY.iter().map(|&k| Action::new(k, city)));
    }
    Ok(actions)
}

/// Income indicator from the low-income population share: `0` iff the share
/// is at or above the threshold.
pub fn income_class(pct_low_income: f64, threshold: f64) -> Result<u8> {
    for (name, v) in [("pct_low_income", pct_low_income), ("threshold", threshold)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    Ok(if pct_low_income >= threshold { LOW_INCOME } else { HIGH_INCOME })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    /// `w_1`, per unit of remaining budget.
    pub budget_weight: f64,
    /// `w_2`, applied to unmet low-income demand × population. Non-positive.
    pub underserved_penalty: f64,
    /// `w_3`, applied to RE-served demand × population.
    pub re_access_weight: f64,
}

impl ObjectiveWeights {
    pub const ZERO: ObjectiveWeights =
        ObjectiveWeights { budget_weight: 0.0, underserved_penalty: 0.0, re_access_weight: 0.0 };

    fn validate_into(&self, report: &mut ValidationReport) {
        for (field, v) in [
            ("budget_weight", self.budget_weight),
            ("underserved_penalty", self.underserved_penalty),
            ("re_access_weight", self.re_access_weight),
        ] {
            if !v.is_finite() {
                report.push("weights", field, "must be finite");
            }
        }
        if self.budget_weight < 0.0 {
            report.push("weights", "budget_weight", "must be >= 0");
        }
        if self.underserved_penalty > 0.0 {
            report.push("weights", "underserved_penalty", "must be <= 0");
        }
        if self.re_access_weight < 0.0 {
            report.push("weights", "re_access_weight", "must be >= 0");
        }
    }
}

/// Costs, increments and objective settings in model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub initial_budget: Money,
    pub add_re_cost: Money,
    pub add_nre_cost: Money,
    pub remove_re_cost: Money,
    pub remove_nre_cost: Money,
    pub re_increment: f64,
    pub nre_increment: f64,
    pub gamma: f64,
    pub weights: ObjectiveWeights,
    pub horizon: usize,
    /// Multiplier applied to the operating-cost sum.
    pub op_cost_scale: f64,
    pub low_income_threshold: f64,
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut report = ValidationReport::default();
        self.validate_into(&mut report);
        report.into_result(())
    }

    fn validate_into(&self, report: &mut ValidationReport) {
        if self.initial_budget.is_negative() {
            report.push("params", "initial_budget", "must be >= 0");
        }
        for (field, cost) in [
            ("add_re_cost", self.add_re_cost),
            ("add_nre_cost", self.add_nre_cost),
            ("remove_re_cost", self.remove_re_cost),
            ("remove_nre_cost", self.remove_nre_cost),
        ] {
            if cost.is_negative() {
                report.push("params", field, format!("negative cost {cost}"));
            }
        }
        for (field, inc) in [("re_increment", self.re_increment), ("nre_increment", self.nre_increment)] {
            if !(inc.is_finite() && inc > 0.0) {
                report.push("params", field, format!("increment must be > 0, got {inc}"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            report.push("params", "gamma", format!("discount out of range (0, 1): {}", self.gamma));
        }
        if self.horizon < 1 {
            report.push("params", "horizon", "must be >= 1");
        }
        if !(self.op_cost_scale.is_finite() && self.op_cost_scale >= 0.0) {
            report.push("params", "op_cost_scale", format!("must be finite and >= 0, got {}", self.op_cost_scale));
        }
        if !(0.0..=1.0).contains(&self.low_income_threshold) {
            report.push(
                "params",
                "low_income_threshold",
                format!("must lie in [0, 1], got {}", self.low_income_threshold),
            );
        }
        self.weights.validate_into(report);
    }
}

/// A validated scenario: parameters plus the initial city table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub cities: Vec<CityState>,
}

impl Scenario {
    pub fn initial_state(&self) -> GridState {
        GridState { budget: self.params.initial_budget, cities: self.cities.clone() }
    }

    pub fn city_count(&self) -> usize {
        self.cities.len()
    }

    /// Index of the city with this name, if any.
    pub fn city_index(&self, name: &str) -> Option<usize> {
        self.cities.iter().position(|c| &*c.name == name)
    }

    /// Restricts the scenario to the given cities, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Scenario> {
        let mut cities = Vec::with_capacity(indices.len());
        for &i in indices {
            let city = self
                .cities
                .get(i)
                .ok_or_else(|| Error::InvalidArgument(format!("city index {i} out of range")))?;
            cities.push(city.clone());
        }
        Ok(validate_scenario(self.params.clone(), cities)?)
    }
}

/// Checks every invariant and reports all violations at once.
pub fn validate_scenario(params: ScenarioParams, cities: Vec<CityState>) -> Result<Scenario, ValidationReport> {
    let mut report = ValidationReport::default();
    params.validate_into(&mut report);
    if cities.is_empty() {
        report.push("cities", "cities", "scenario must contain at least one city");
    }
    for city in &cities {
        city.validate_into(&mut report);
    }
    report.into_result(Scenario { params, cities })
}
