//! Finite abstraction of the grid MDP: binned budget and supplies for a
//! subset of cities, with demand either frozen at its mean or quantized.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::domain::{enumerate_actions, Action, GridState, Scenario};
use crate::env::{apply_action, infeasibility, reward};
use crate::error::{Error, Result};
use crate::money::Money;

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Contiguous bins given by strictly increasing edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bins {
    edges: Vec<f64>,
}

impl Bins {
    pub fn new(edges: Vec<f64>) -> Result<Bins> {
        if edges.len() < 3 {
            return Err(Error::InvalidArgument(format!("need at least 2 bins (3 edges), got {} edges", edges.len())));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!("bin edges must be finite and strictly increasing: {edges:?}")));
        }
        Ok(Bins { edges })
    }

    /// `count` equal-width bins over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Bins> {
        let width = (hi - lo) / count as f64;
        Bins::new((0..=count).map(|k| lo + width * k as f64).collect())
    }

    /// `count` bins of width `step` centred on `start, start + step, ...`.
    pub fn lattice(start: f64, step: f64, count: usize) -> Result<Bins> {
        Bins::new((0..=count).map(|k| start + step * (k as f64 - 0.5)).collect())
    }

    pub fn count(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        0.5 * (self.edges[k] + self.edges[k + 1])
    }

    /// Bin containing `x`; values outside the edges clamp to the nearest bin
    /// and report `true`.
    pub fn locate(&self, x: f64) -> (usize, bool) {
        let last = self.count() - 1;
        if x < self.edges[0] {
            return (0, true);
        }
        if x > self.edges[last + 1] {
            return (last, true);
        }
        // Index of the first edge strictly greater than x, minus one.
        let k = self.edges.partition_point(|&e| e <= x).saturating_sub(1);
        (k.min(last), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DemandMode {
    FrozenAtMean,
    /// Each city's demand takes `points` equiprobable quantile values.
    Quantized { points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSpec {
    pub budget_bins: Bins,
    /// One RE and one NRE axis per city in the subset, in subset order.
    pub re_bins: Vec<Bins>,
    pub nre_bins: Vec<Bins>,
    pub demand_mode: DemandMode,
    /// Original city indices; `None` means every city.
    pub city_subset: Option<Vec<usize>>,
    pub state_cap: usize,
}

impl DiscretizationSpec {
    /// Budget split into `budget_bins` equal bins over `[0, initial]`; each
    /// supply axis is a lattice of `supply_bins` bins centred on the initial
    /// supply plus whole increments.
    pub fn for_scenario(
        scenario: &Scenario,
        city_subset: Option<Vec<usize>>,
        budget_bins: usize,
        supply_bins: usize,
    ) -> Result<DiscretizationSpec> {
        let indices = resolve_subset(scenario, city_subset.as_deref())?;
        let p = &scenario.params;
        let budget_bins = Bins::uniform(0.0, p.initial_budget.to_f64(), budget_bins)?;
        let mut re_bins = Vec::with_capacity(indices.len());
        let mut nre_bins = Vec::with_capacity(indices.len());
        for &i in &indices {
            let c = &scenario.cities[i];
            re_bins.push(Bins::lattice(c.re_supply, p.re_increment, supply_bins)?);
            nre_bins.push(Bins::lattice(c.nre_supply, p.nre_increment, supply_bins)?);
        }
        Ok(DiscretizationSpec {
            budget_bins,
            re_bins,
            nre_bins,
            demand_mode: DemandMode::FrozenAtMean,
            city_subset,
            state_cap: DEFAULT_STATE_CAP,
        })
    }

    /// Abstract state count, computed without overflow.
    pub fn state_count(&self) -> u128 {
        let mut s = self.budget_bins.count() as u128;
        for (re, nre) in self.re_bins.iter().zip(&self.nre_bins) {
            s = s.saturating_mul(re.count() as u128).saturating_mul(nre.count() as u128);
        }
        s
    }

    fn describe(&self) -> String {
        let axes: Vec<String> =
            self.re_bins.iter().zip(&self.nre_bins).map(|(r, n)| format!("{}x{}", r.count(), n.count())).collect();
        format!(
            "{} budget bins, supply bins per city [{}], city subset {:?}",
            self.budget_bins.count(),
            axes.join(", "),
            self.city_subset
        )
    }
}

fn resolve_subset(scenario: &Scenario, subset: Option<&[usize]>) -> Result<Vec<usize>> {
    match subset {
        None => Ok((0..scenario.city_count()).collect()),
        Some([]) => Err(Error::InvalidArgument("city subset is empty".into())),
        Some(s) => {
            for (k, &i) in s.iter().enumerate() {
                if i >= scenario.city_count() {
                    return Err(Error::InvalidArgument(format!("city index {i} out of range")));
                }
                if s[..k].contains(&i) {
                    return Err(Error::InvalidArgument(format!("city index {i} repeated in subset")));
                }
            }
            Ok(s.to_vec())
        }
    }
}

/// A finite MDP with sparse transition rows. Actions marked infeasible in a
/// state have empty rows and are skipped by solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMdp {
    n_states: usize,
    n_actions: usize,
    /// Row `s * n_actions + a`: `(next_state, probability)` pairs.
    transitions: Vec<Vec<(usize, f64)>>,
    rewards: Vec<f64>,
    feasible: Vec<bool>,
    abstraction: Option<Abstraction>,
}

/// Links a [`DiscreteMdp`] built from a scenario back to concrete states.
#[derive(Debug, Clone, PartialEq)]
pub struct Abstraction {
    pub spec: DiscretizationSpec,
    /// Original city index for each subset position.
    pub cities: Vec<usize>,
    /// Action set over subset positions, in enumeration order.
    pub actions: Vec<Action>,
}

impl DiscreteMdp {
    /// Builds and checks an explicit MDP. `transitions[s][a]` lists
    /// `(next, prob)`; an empty row marks `a` infeasible in `s`.
    pub fn from_tables(transitions: Vec<Vec<Vec<(usize, f64)>>>, rewards: Vec<Vec<f64>>) -> Result<DiscreteMdp> {
        let n_states = transitions.len();
        if n_states == 0 || rewards.len() != n_states {
            return Err(Error::MalformedMdp("state count mismatch or zero states".into()));
        }
        let n_actions = transitions[0].len();
        let mut flat_t = Vec::with_capacity(n_states * n_actions);
        let mut flat_r = Vec::with_capacity(n_states * n_actions);
        let mut feasible = Vec::with_capacity(n_states * n_actions);
        for (s, (rows, rs)) in transitions.into_iter().zip(rewards).enumerate() {
            if rows.len() != n_actions || rs.len() != n_actions {
                return Err(Error::MalformedMdp(format!("state {s} has the wrong number of actions")));
            }
            for (row, r) in rows.into_iter().zip(rs) {
                feasible.push(!row.is_empty());
                flat_t.push(row);
                flat_r.push(r);
            }
        }
        let mdp = DiscreteMdp { n_states, n_actions, transitions: flat_t, rewards: flat_r, feasible, abstraction: None };
        mdp.check()?;
        Ok(mdp)
    }

    fn check(&self) -> Result<()> {
        for s in 0..self.n_states {
            if !(0..self.n_actions).any(|a| self.is_feasible(s, a)) {
                return Err(Error::MalformedMdp(format!("state {s} has no feasible action")));
            }
            for a in 0..self.n_actions {
                if !self.is_feasible(s, a) {
                    continue;
                }
                if !self.reward(s, a).is_finite() {
                    return Err(Error::MalformedMdp(format!("non-finite reward at ({s}, {a})")));
                }
                let mut total = 0.0;
                for &(next, p) in self.row(s, a) {
                    if next >= self.n_states || !p.is_finite() || p < 0.0 {
                        return Err(Error::MalformedMdp(format!("bad transition entry at ({s}, {a})")));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::MalformedMdp(format!("row ({s}, {a}) sums to {total}")));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn is_feasible(&self, s: usize, a: usize) -> bool {
        self.feasible[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.n_actions + a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn abstraction(&self) -> Option<&Abstraction> {
        self.abstraction.as_ref()
    }

    /// True when every feasible row has a single successor.
    pub fn is_deterministic(&self) -> bool {
        self.transitions.iter().all(|row| row.len() <= 1)
    }
}

impl Abstraction {
    /// Mixed-radix index: budget bin most significant, then (RE, NRE) per city.
    pub fn encode(&self, budget_bin: usize, supply_bins: &[(usize, usize)]) -> usize {
        let mut s = budget_bin;
        for ((re, nre), (rb, nb)) in supply_bins.iter().zip(self.spec.re_bins.iter().zip(&self.spec.nre_bins)) {
            s = (s * rb.count() + re) * nb.count() + nre;
        }
        s
    }

    pub fn decode(&self, mut s: usize) -> (usize, Vec<(usize, usize)>) {
        let m = self.cities.len();
        let mut supply = vec![(0, 0); m];
        for j in (0..m).rev() {
            let nc = self.spec.nre_bins[j].count();
            let rc = self.spec.re_bins[j].count();
            let nre = s % nc;
            s /= nc;
            let re = s % rc;
            s /= rc;
            supply[j] = (re, nre);
        }
        (s, supply)
    }

    /// Bin of a concrete full-scenario state; the flag is set if any
    /// coordinate was clamped into range.
    pub fn locate(&self, state: &GridState) -> (usize, bool) {
        let (b, mut clamped) = self.spec.budget_bins.locate(state.budget.to_f64());
        let mut supply = Vec::with_capacity(self.cities.len());
        for (j, &i) in self.cities.iter().enumerate() {
            let c = &state.cities[i];
            let (re, c1) = self.spec.re_bins[j].locate(c.re_supply);
            let (nre, c2) = self.spec.nre_bins[j].locate(c.nre_supply);
            clamped |= c1 | c2;
            supply.push((re, nre));
        }
        (self.encode(b, &supply), clamped)
    }

    /// Maps a subset-indexed action to the full scenario's city indexing.
    pub fn lift(&self, action: Action) -> Action {
        match action.city() {
            None => action,
            Some(j) => action.with_city(self.cities[j]),
        }
    }
}

/// Equiprobable quantile points of `Normal(mu, sd²)`, clamped at zero.
fn demand_points(mu: f64, sd: f64, points: usize) -> Vec<f64> {
    if sd == 0.0 || points <= 1 {
        return vec![mu.max(0.0)];
    }
    let normal = Normal::new(mu, sd).expect("validated stddev");
    (0..points).map(|k| normal.inverse_cdf((k as f64 + 0.5) / points as f64).max(0.0)).collect()
}

/// Per-state transition rows, rewards and feasibility flags, one per action.
type StateRows = (Vec<Vec<(usize, f64)>>, Vec<f64>, Vec<bool>);

/// Enumerates the abstract states of `spec` over the scenario's city subset.
/// Each row applies the action to the bin's representative (midpoint) state
/// and maps the result back to a bin. Rewards are evaluated at the successor
/// representative-with-exact-supplies state, averaged over demand points.
pub fn build_discrete_mdp(scenario: &Scenario, spec: &DiscretizationSpec) -> Result<DiscreteMdp> {
    let cities = resolve_subset(scenario, spec.city_subset.as_deref())?;
    if spec.re_bins.len() != cities.len() || spec.nre_bins.len() != cities.len() {
        return Err(Error::InvalidArgument(format!(
            "spec has {} RE / {} NRE axes for {} cities",
            spec.re_bins.len(),
            spec.nre_bins.len(),
            cities.len()
        )));
    }
    let states = spec.state_count();
    if states > spec.state_cap as u128 {
        return Err(Error::StateCapExceeded { states, cap: spec.state_cap, spec: spec.describe() });
    }
    let n_states = states as usize;
    let reduced = scenario.subset(&cities)?;
    let params = &reduced.params;
    let actions = enumerate_actions(cities.len())?;
    let n_actions = actions.len();
    let abstraction = Abstraction { spec: spec.clone(), cities: cities.clone(), actions: actions.clone() };

    // Demand scenarios over the subset: cartesian product of per-city points.
    let per_city: Vec<Vec<f64>> = reduced
        .cities
        .iter()
        .map(|c| match spec.demand_mode {
            DemandMode::FrozenAtMean => vec![c.baseline_demand],
            DemandMode::Quantized { points } => demand_points(c.baseline_demand, c.demand_stddev, points),
        })
        .collect();
    let mut demand_sets: Vec<Vec<f64>> = vec![Vec::new()];
    for pts in &per_city {
        demand_sets = demand_sets
            .into_iter()
            .flat_map(|prefix| {
                pts.iter().map(move |&d| {
                    let mut v = prefix.clone();
                    v.push(d);
                    v
                })
            })
            .collect();
    }
    let weight = 1.0 / demand_sets.len() as f64;

    let rows: Vec<StateRows> = (0..n_states)
        .into_par_iter()
        .map(|s| {
            let (b, supply) = abstraction.decode(s);
            let mut rep = reduced.initial_state();
            rep.budget = Money::from_f64(spec.budget_bins.midpoint(b));
            for (j, &(re, nre)) in supply.iter().enumerate() {
                rep.cities[j].re_supply = spec.re_bins[j].midpoint(re).max(0.0);
                rep.cities[j].nre_supply = spec.nre_bins[j].midpoint(nre).max(0.0);
            }
            let mut t_rows = Vec::with_capacity(n_actions);
            let mut r_row = Vec::with_capacity(n_actions);
            let mut f_row = Vec::with_capacity(n_actions);
            for &a in &actions {
                if infeasibility(&rep, a, params).is_some() {
                    t_rows.push(Vec::new());
                    r_row.push(0.0);
                    f_row.push(false);
                    continue;
                }
                let applied = apply_action(&rep, a, params).expect("feasibility checked");
                let mut next = applied.state;
                let mut r = 0.0;
                for demands in &demand_sets {
                    for (c, &d) in next.cities.iter_mut().zip(demands) {
                        c.demand = d;
                    }
                    r += weight * reward(&next, &params.weights);
                }
                let (target, _) = abstraction.locate_reduced(&next);
                t_rows.push(vec![(target, 1.0)]);
                r_row.push(r);
                f_row.push(true);
            }
            (t_rows, r_row, f_row)
        })
        .collect();

    let mut transitions = Vec::with_capacity(n_states * n_actions);
    let mut rewards = Vec::with_capacity(n_states * n_actions);
    let mut feasible = Vec::with_capacity(n_states * n_actions);
    for (t, r, f) in rows {
        transitions.extend(t);
        rewards.extend(r);
        feasible.extend(f);
    }
    let mdp = DiscreteMdp { n_states, n_actions, transitions, rewards, feasible, abstraction: Some(abstraction) };
    mdp.check()?;
    Ok(mdp)
}

impl Abstraction {
    /// Like [`Abstraction::locate`] for a state that holds only the subset's
    /// cities, in subset order.
    fn locate_reduced(&self, state: &GridState) -> (usize, bool) {
        let (b, mut clamped) = self.spec.budget_bins.locate(state.budget.to_f64());
        let supply: Vec<(usize, usize)> = state
            .cities
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let (re, c1) = self.spec.re_bins[j].locate(c.re_supply);
                let (nre, c2) = self.spec.nre_bins[j].locate(c.nre_supply);
                clamped |= c1 | c2;
                (re, nre)
            })
            .collect();
        (self.encode(b, &supply), clamped)
    }
}
