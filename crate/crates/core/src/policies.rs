//! Decision rules behind one interface, selectable by name.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::domain::{Action, GridState, ObjectiveWeights, Scenario, ScenarioParams};
use crate::env::feasible_actions;
use crate::error::{Error, Result};
use crate::solvers::{build_discrete_mdp, mcts_search, DiscretizationSpec, MctsConfig, ViPolicyTables};

/// Everything a policy may look at when choosing an action.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub state: &'a GridState,
    pub params: &'a ScenarioParams,
    /// Zero-based step index within the episode.
    pub step: usize,
    pub horizon: usize,
}

impl DecisionContext<'_> {
    pub fn steps_remaining(&self) -> usize {
        self.horizon.saturating_sub(self.step)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    /// Free-form flag recorded in the trace (e.g. a clamped VI lookup).
    pub note: Option<String>,
}

impl From<Action> for Decision {
    fn from(action: Action) -> Self {
        Decision { action, note: None }
    }
}

pub trait Policy: Send + Sync {
    fn decide(&self, ctx: &DecisionContext<'_>, rng: &mut ChaCha8Rng) -> Result<Decision>;

    /// Configuration echo for run logs.
    fn metadata(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// A named policy. Cheap to clone and shareable across workers.
#[derive(Clone)]
pub struct PolicyHandle {
    name: String,
    policy: Arc<dyn Policy>,
}

impl PolicyHandle {
    pub fn new(name: impl Into<String>, policy: impl Policy + 'static) -> PolicyHandle {
        PolicyHandle { name: name.into(), policy: Arc::new(policy) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn decide(&self, ctx: &DecisionContext<'_>, rng: &mut ChaCha8Rng) -> Result<Decision> {
        self.policy.decide(ctx, rng)
    }

    pub fn metadata(&self) -> serde_json::Value {
        json!({ "name": self.name, "config": self.policy.metadata() })
    }
}

impl fmt::Debug for PolicyHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolicyHandle").field("name", &self.name).finish_non_exhaustive()
    }
}

/// Uniform draw over the feasible actions.
pub fn random_policy<R: Rng + ?Sized>(state: &GridState, params: &ScenarioParams, rng: &mut R) -> Action {
    let actions = feasible_actions(state, params);
    actions[rng.random_range(0..actions.len())]
}

/// Always `DoNothing`.
pub fn noop_policy(_state: &GridState) -> Action {
    Action::DoNothing
}

/// Deterministic equity-first heuristic.
///
/// Targets the city with the largest unmet demand × population: low-income
/// cities get RE first when the budget covers it, then any city gets RE,
/// then NRE when only NRE is affordable. Never removes facilities.
pub fn expert_policy(state: &GridState, params: &ScenarioParams) -> Action {
    // First index wins ties.
    let best = |low_income_only: bool| -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in state.cities.iter().enumerate() {
            let unmet = c.unmet_demand();
            if unmet <= 0.0 || (low_income_only && !c.is_low_income()) {
                continue;
            }
            let score = unmet * c.population;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        best.map(|b| b.0)
    };
    if state.budget >= params.add_re_cost {
        if let Some(i) = best(true).or_else(|| best(false)) {
            return Action::AddRe(i);
        }
    }
    if state.budget >= params.add_nre_cost {
        if let Some(i) = best(false) {
            return Action::AddNre(i);
        }
    }
    Action::DoNothing
}

struct RandomPolicy;

impl Policy for RandomPolicy {
    fn decide(&self, ctx: &DecisionContext<'_>, rng: &mut ChaCha8Rng) -> Result<Decision> {
        Ok(random_policy(ctx.state, ctx.params, rng).into())
    }
}

struct ExpertPolicy;

impl Policy for ExpertPolicy {
    fn decide(&self, ctx: &DecisionContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Decision> {
        Ok(expert_policy(ctx.state, ctx.params).into())
    }
}

struct NoopPolicy;

impl Policy for NoopPolicy {
    fn decide(&self, ctx: &DecisionContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Decision> {
        Ok(noop_policy(ctx.state).into())
    }
}

struct MctsPolicy {
    cfg: MctsConfig,
}

impl Policy for MctsPolicy {
    fn decide(&self, ctx: &DecisionContext<'_>, rng: &mut ChaCha8Rng) -> Result<Decision> {
        let mut cfg = self.cfg.clone();
        cfg.max_depth = cfg.max_depth.min(ctx.steps_remaining()).max(1);
        mcts_search(ctx.state, ctx.params, &cfg, rng).map(Decision::from)
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::to_value(&self.cfg).unwrap_or_default()
    }
}

struct ViPolicy {
    tables: ViPolicyTables,
    cities: Vec<String>,
}

impl Policy for ViPolicy {
    fn decide(&self, ctx: &DecisionContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Decision> {
        let look = self.tables.action_for(ctx.state, ctx.params);
        let note = match (look.clamped, look.fallback) {
            (false, false) => None,
            (true, false) => Some("vi-clamped".to_string()),
            (false, true) => Some("vi-fallback".to_string()),
            (true, true) => Some("vi-clamped,vi-fallback".to_string()),
        };
        Ok(Decision { action: look.action, note })
    }

    fn metadata(&self) -> serde_json::Value {
        let t = &self.tables.tables;
        json!({
            "cities": self.cities,
            "states": self.tables.mdp.n_states(),
            "actions": self.tables.mdp.n_actions(),
            "sweeps": t.sweeps,
            "residual": t.residual,
            "spec": self.tables.mdp.abstraction().map(|a| &a.spec),
        })
    }
}

/// Multipliers that turn the scenario weights into the RE-emphasis search
/// weights used by `mcts-re`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReEmphasis {
    pub re_access_multiplier: f64,
    pub budget_multiplier: f64,
}

impl Default for ReEmphasis {
    fn default() -> Self {
        ReEmphasis { re_access_multiplier: 5.0, budget_multiplier: 0.2 }
    }
}

impl ReEmphasis {
    pub fn apply(&self, w: &ObjectiveWeights) -> ObjectiveWeights {
        ObjectiveWeights {
            budget_weight: w.budget_weight * self.budget_multiplier,
            underserved_penalty: w.underserved_penalty,
            re_access_weight: w.re_access_weight * self.re_access_multiplier,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViSettings {
    /// Original city indices; `None` means all cities.
    pub city_subset: Option<Vec<usize>>,
    pub budget_bins: usize,
    pub supply_bins: usize,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl ViSettings {
    /// Two cities by default: the most populous low-income city and the most
    /// populous high-income city.
    pub fn default_for(scenario: &Scenario) -> ViSettings {
        let pick = |low: bool| {
            scenario
                .cities
                .iter()
                .enumerate()
                .filter(|(_, c)| c.is_low_income() == low)
                .max_by(|a, b| a.1.population.total_cmp(&b.1.population).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
        };
        let mut subset: Vec<usize> = [pick(true), pick(false)].into_iter().flatten().collect();
        subset.sort_unstable();
        ViSettings { city_subset: Some(subset), budget_bins: 10, supply_bins: 6, tolerance: 1e-9, max_sweeps: 100_000 }
    }
}

/// Solver settings shared by the named policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySettings {
    pub mcts: MctsConfig,
    pub re_emphasis: ReEmphasis,
    pub vi: ViSettings,
}

impl PolicySettings {
    pub fn default_for(scenario: &Scenario) -> PolicySettings {
        PolicySettings {
            mcts: MctsConfig { max_depth: scenario.params.horizon, ..MctsConfig::default() },
            re_emphasis: ReEmphasis::default(),
            vi: ViSettings::default_for(scenario),
        }
    }
}

pub const POLICY_NAMES: [&str; 6] = ["random", "expert", "noop", "vi", "mcts-base", "mcts-re"];

/// Builds a policy by name. `vi` solves its abstraction here, which fails if
/// the discretized state space exceeds the cap.
pub fn build_policy(name: &str, scenario: &Scenario, settings: &PolicySettings) -> Result<PolicyHandle> {
    match name {
        "random" => Ok(PolicyHandle::new(name, RandomPolicy)),
        "expert" => Ok(PolicyHandle::new(name, ExpertPolicy)),
        "noop" => Ok(PolicyHandle::new(name, NoopPolicy)),
        "mcts-base" => Ok(PolicyHandle::new(name, MctsPolicy { cfg: settings.mcts.clone() })),
        "mcts-re" => {
            let base = settings.mcts.weights_override.unwrap_or(scenario.params.weights);
            let cfg = MctsConfig { weights_override: Some(settings.re_emphasis.apply(&base)), ..settings.mcts.clone() };
            Ok(PolicyHandle::new(name, MctsPolicy { cfg }))
        }
        "vi" => {
            let vi = &settings.vi;
            let spec =
                DiscretizationSpec::for_scenario(scenario, vi.city_subset.clone(), vi.budget_bins, vi.supply_bins)?;
            let mdp = build_discrete_mdp(scenario, &spec)?;
            let cities = mdp
                .abstraction()
                .map(|a| a.cities.iter().map(|&i| scenario.cities[i].name.to_string()).collect())
                .unwrap_or_default();
            let tables = ViPolicyTables::solve(mdp, scenario.params.gamma, vi.tolerance, vi.max_sweeps)?;
            Ok(PolicyHandle::new(name, ViPolicy { tables, cities }))
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown policy '{other}' (expected one of: {})",
            POLICY_NAMES.join(", ")
        ))),
    }
}
