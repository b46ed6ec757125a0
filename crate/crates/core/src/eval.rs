//! Seeded episodes, end-of-run metrics and the policy comparison table.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Action, GridState, Scenario};
use crate::env::{infeasibility, step};
use crate::error::{Error, Result};
use crate::money::Money;
use crate::policies::{DecisionContext, PolicyHandle};

/// Stream used for demand draws; policies draw from their own stream so that
/// every policy sees the same demands for a given `(seed, step)`.
const ENV_STREAM: u64 = 0;
const POLICY_STREAM: u64 = 1;

pub fn env_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ENV_STREAM);
    rng
}

pub fn policy_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(POLICY_STREAM);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// State the policy was asked about.
    pub state: GridState,
    pub action: Action,
    pub reward: f64,
    pub action_cost: Money,
    pub op_cost: Money,
    pub op_shortfall: Money,
    pub demands: Vec<f64>,
    pub budget_after: Money,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub policy: String,
    pub records: Vec<StepRecord>,
    pub final_state: GridState,
}

impl EpisodeTrace {
    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.reward)
    }

    /// States after each step, in order.
    pub fn post_states(&self) -> impl Iterator<Item = &GridState> + '_ {
        self.records.iter().skip(1).map(|r| &r.state).chain(std::iter::once(&self.final_state))
    }
}

/// Runs one episode from the scenario's initial state. Any infeasible action
/// or negative supply is a hard error naming the policy and step.
pub fn run_episode(policy: &PolicyHandle, scenario: &Scenario, horizon: usize, seed: u64) -> Result<EpisodeTrace> {
    if horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let params = &scenario.params;
    let mut env = env_rng(seed);
    let mut prng = policy_rng(seed);
    let mut state = scenario.initial_state();
    let mut records = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let ctx = DecisionContext { state: &state, params, step: t, horizon };
        let decision = policy.decide(&ctx, &mut prng)?;
        if infeasibility(&state, decision.action, params).is_some() {
            return Err(Error::PolicyInfeasible { policy: policy.name().to_string(), step: t, action: decision.action });
        }
        let out = step(&state, decision.action, &mut env, params)?;
        if out.next_state.cities.iter().any(|c| c.re_supply < 0.0 || c.nre_supply < 0.0) {
            return Err(Error::PolicyInfeasible { policy: policy.name().to_string(), step: t, action: decision.action });
        }
        records.push(StepRecord {
            step: t,
            state,
            action: decision.action,
            reward: out.reward,
            action_cost: out.action_cost_paid,
            op_cost: out.op_cost_paid,
            op_shortfall: out.op_shortfall,
            demands: out.demands_drawn,
            budget_after: out.next_state.budget,
            note: decision.note,
        });
        state = out.next_state;
    }
    Ok(EpisodeTrace { seed, policy: policy.name().to_string(), records, final_state: state })
}

/// `Σ_t γ^t r_t`, with `t` starting at zero.
pub fn discounted_return(trace: &EpisodeTrace, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let mut total = 0.0;
    let mut discount = 1.0;
    for r in trace.rewards() {
        total += discount * r;
        discount *= gamma;
    }
    Ok(total)
}

/// Outcome measures of a single state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StateMetrics {
    pub re_fraction: f64,
    pub budget_used: f64,
    pub underserved_low_income_cities: usize,
    pub underserved_high_income_cities: usize,
    pub underserved_low_income_population: f64,
    pub underserved_high_income_population: f64,
}

/// Evaluates the outcome measures on `state`.
///
/// A city is underserved iff `d > r + n`; its population counts in
/// proportion to the unmet fraction of its demand. Zero-demand cities are
/// skipped; if total demand is zero the RE fraction is reported as 0.
pub fn state_metrics(state: &GridState, initial_budget: Money) -> StateMetrics {
    let mut m = StateMetrics { budget_used: (initial_budget - state.budget).to_f64(), ..StateMetrics::default() };
    let mut served_by_re = 0.0;
    let mut demand = 0.0;
    for c in &state.cities {
        if c.demand <= 0.0 {
            continue;
        }
        served_by_re += c.re_supply.min(c.demand);
        demand += c.demand;
        if c.demand > c.total_supply() {
            let weighted = c.population * (c.unmet_demand() / c.demand).min(1.0);
            if c.is_low_income() {
                m.underserved_low_income_cities += 1;
                m.underserved_low_income_population += weighted;
            } else {
                m.underserved_high_income_cities += 1;
                m.underserved_high_income_population += weighted;
            }
        }
    }
    m.re_fraction = if demand > 0.0 { served_by_re / demand } else { 0.0 };
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub discounted_return: f64,
    pub re_fraction: f64,
    pub budget_used: f64,
    pub underserved_low_income_cities: usize,
    pub underserved_high_income_cities: usize,
    pub underserved_low_income_population: f64,
    pub underserved_high_income_population: f64,
}

impl MetricsRecord {
    /// Values in table column order.
    pub fn values(&self) -> [f64; 7] {
        [
            self.discounted_return,
            self.re_fraction,
            self.budget_used,
            self.underserved_low_income_cities as f64,
            self.underserved_high_income_cities as f64,
            self.underserved_low_income_population,
            self.underserved_high_income_population,
        ]
    }
}

/// End-of-run metrics on the trace's final state.
pub fn compute_metrics(trace: &EpisodeTrace, scenario: &Scenario) -> Result<MetricsRecord> {
    let m = state_metrics(&trace.final_state, scenario.params.initial_budget);
    Ok(MetricsRecord {
        discounted_return: discounted_return(trace, scenario.params.gamma)?,
        re_fraction: m.re_fraction,
        budget_used: m.budget_used,
        underserved_low_income_cities: m.underserved_low_income_cities,
        underserved_high_income_cities: m.underserved_high_income_cities,
        underserved_low_income_population: m.underserved_low_income_population,
        underserved_high_income_population: m.underserved_high_income_population,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        if values.windows(2).all(|w| w[0] == w[1]) {
            return Summary { mean: values.first().copied().unwrap_or(f64::NAN), std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Summary { mean, std: var.max(0.0).sqrt() }
    }

    /// Standard error of the mean for `n` samples.
    pub fn std_error(&self, n: usize) -> f64 {
        self.std / (n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub policy: String,
    pub episodes: usize,
    pub reward: Summary,
    pub re_fraction: Summary,
    pub budget_used: Summary,
    pub low_income_cities: Summary,
    pub high_income_cities: Summary,
    pub low_income_population: Summary,
    pub high_income_population: Summary,
}

impl AggregateResult {
    pub fn summaries(&self) -> [Summary; 7] {
        [
            self.reward,
            self.re_fraction,
            self.budget_used,
            self.low_income_cities,
            self.high_income_cities,
            self.low_income_population,
            self.high_income_population,
        ]
    }
}

/// Per-metric sample mean and standard deviation.
pub fn aggregate(policy: &str, records: &[MetricsRecord]) -> Result<AggregateResult> {
    if records.len() < 2 {
        return Err(Error::TooFewRecords(records.len()));
    }
    let column = |k: usize| Summary::of(&records.iter().map(|r| r.values()[k]).collect::<Vec<_>>());
    Ok(AggregateResult {
        policy: policy.to_string(),
        episodes: records.len(),
        reward: column(0),
        re_fraction: column(1),
        budget_used: column(2),
        low_income_cities: column(3),
        high_income_cities: column(4),
        low_income_population: column(5),
        high_income_population: column(6),
    })
}

/// Mean of the per-step measures across one policy's episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub step: usize,
    pub reward: f64,
    pub cumulative_discounted_reward: f64,
    pub re_fraction: f64,
    pub budget_remaining: f64,
    pub low_income_cities: f64,
    pub high_income_cities: f64,
    pub low_income_population: f64,
    pub high_income_population: f64,
}

pub fn series(traces: &[EpisodeTrace], scenario: &Scenario) -> Vec<SeriesPoint> {
    let Some(first) = traces.first() else { return Vec::new() };
    let n = traces.len() as f64;
    let gamma = scenario.params.gamma;
    let mut cumulative = vec![0.0; traces.len()];
    let per_trace_states: Vec<Vec<&GridState>> = traces.iter().map(|t| t.post_states().collect()).collect();
    let steps = first.records.len();
    let mut out = Vec::with_capacity(steps);
    #[allow(clippy::needless_range_loop)]
    for t in 0..steps {
        let mut p = SeriesPoint {
            step: t,
            reward: 0.0,
            cumulative_discounted_reward: 0.0,
            re_fraction: 0.0,
            budget_remaining: 0.0,
            low_income_cities: 0.0,
            high_income_cities: 0.0,
            low_income_population: 0.0,
            high_income_population: 0.0,
        };
        for (k, trace) in traces.iter().enumerate() {
            let r = trace.records[t].reward;
            cumulative[k] += gamma.powi(t as i32) * r;
            let state = per_trace_states[k][t];
            let m = state_metrics(state, scenario.params.initial_budget);
            p.reward += r / n;
            p.cumulative_discounted_reward += cumulative[k] / n;
            p.re_fraction += m.re_fraction / n;
            p.budget_remaining += state.budget.to_f64() / n;
            p.low_income_cities += m.underserved_low_income_cities as f64 / n;
            p.high_income_cities += m.underserved_high_income_cities as f64 / n;
            p.low_income_population += m.underserved_low_income_population / n;
            p.high_income_population += m.underserved_high_income_population / n;
        }
        out.push(p);
    }
    out
}

#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub aggregate: AggregateResult,
    pub metrics: Vec<MetricsRecord>,
    pub traces: Vec<EpisodeTrace>,
    pub series: Vec<SeriesPoint>,
}

/// Rows ordered by mean discounted return, highest first.
#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub runs: Vec<PolicyRun>,
}

impl BenchmarkResult {
    pub fn rows(&self) -> Vec<&AggregateResult> {
        self.runs.iter().map(|r| &r.aggregate).collect()
    }

    pub fn run(&self, policy: &str) -> Option<&PolicyRun> {
        self.runs.iter().find(|r| r.aggregate.policy == policy)
    }
}

/// Runs every policy on seeds `base_seed .. base_seed + n_episodes`
/// (common random numbers), aggregates, and sorts by mean return
/// descending. Episodes run on the current rayon pool; results do not depend
/// on the worker count.
pub fn benchmark(
    policies: &[PolicyHandle],
    scenario: &Scenario,
    horizon: usize,
    n_episodes: usize,
    base_seed: u64,
) -> Result<BenchmarkResult> {
    if n_episodes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 episodes, got {n_episodes}")));
    }
    if policies.is_empty() {
        return Err(Error::InvalidArgument("no policies given".into()));
    }
    let mut runs = Vec::with_capacity(policies.len());
    for policy in policies {
        let traces: Vec<EpisodeTrace> = (0..n_episodes as u64)
            .into_par_iter()
            .map(|k| run_episode(policy, scenario, horizon, base_seed.wrapping_add(k)))
            .collect::<Result<_>>()?;
        let metrics: Vec<MetricsRecord> =
            traces.iter().map(|t| compute_metrics(t, scenario)).collect::<Result<_>>()?;
        let aggregate = aggregate(policy.name(), &metrics)?;
        let series = series(&traces, scenario);
        runs.push(PolicyRun { aggregate, metrics, traces, series });
    }
    // Stable: equal means keep the input order.
    runs.sort_by(|a, b| b.aggregate.reward.mean.total_cmp(&a.aggregate.reward.mean));
    Ok(BenchmarkResult { runs })
}
