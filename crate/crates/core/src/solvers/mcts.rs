//! UCT search with chance nodes over sampled demand outcomes.
//!
//! Decision nodes branch on feasible actions. Each action leads to a chance
//! node that keeps at most `chance_samples` distinct sampled outcomes; once
//! full, revisits pick one of the stored outcomes uniformly at random.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Action, GridState, ObjectiveWeights, ScenarioParams};
use crate::env::{feasible_actions, step_with_weights};
use crate::error::{Error, Result};
use crate::policies::{expert_policy, random_policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutPolicy {
    Random,
    Expert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MctsConfig {
    pub iterations: usize,
    /// UCT exploration constant `c`.
    pub exploration_constant: f64,
    /// Plies searched below the root.
    pub max_depth: usize,
    /// Distinct demand outcomes kept per chance node.
    pub chance_samples: usize,
    pub rollout_policy: RolloutPolicy,
    /// Search-time reward weights; `None` uses the scenario weights.
    pub weights_override: Option<ObjectiveWeights>,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            iterations: 2_000,
            exploration_constant: std::f64::consts::SQRT_2,
            max_depth: 10,
            chance_samples: 4,
            rollout_policy: RolloutPolicy::Random,
            weights_override: None,
        }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidArgument("MCTS iterations must be >= 1".into()));
        }
        if !(self.exploration_constant.is_finite() && self.exploration_constant >= 0.0) {
            return Err(Error::InvalidArgument("MCTS exploration constant must be finite and >= 0".into()));
        }
        if self.chance_samples < 1 {
            return Err(Error::InvalidArgument("MCTS chance_samples must be >= 1".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::InvalidArgument("MCTS max_depth must be >= 1".into()));
        }
        Ok(())
    }

    fn weights(&self, params: &ScenarioParams) -> ObjectiveWeights {
        self.weights_override.unwrap_or(params.weights)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchStats {
    pub action: Action,
    /// Root children in enumeration order with visit counts and mean values.
    pub root_children: Vec<(Action, u32, f64)>,
    pub iterations: usize,
    pub decision_nodes: usize,
}

struct Outcome {
    reward: f64,
    demands: Vec<f64>,
    child: usize,
}

struct ChanceNode {
    action: Action,
    visits: u32,
    value_sum: f64,
    outcomes: Vec<Outcome>,
}

impl ChanceNode {
    fn mean(&self) -> f64 {
        self.value_sum / self.visits as f64
    }
}

struct DecisionNode {
    state: GridState,
    depth: usize,
    visits: u32,
    children: Vec<ChanceNode>,
}

struct Tree<'a> {
    nodes: Vec<DecisionNode>,
    params: &'a ScenarioParams,
    cfg: &'a MctsConfig,
    weights: ObjectiveWeights,
}

impl<'a> Tree<'a> {
    fn new_node(&mut self, state: GridState, depth: usize) -> usize {
        let children = if depth < self.cfg.max_depth {
            feasible_actions(&state, self.params)
                .into_iter()
                .map(|action| ChanceNode { action, visits: 0, value_sum: 0.0, outcomes: Vec::new() })
                .collect()
        } else {
            Vec::new()
        };
        self.nodes.push(DecisionNode { state, depth, visits: 0, children });
        self.nodes.len() - 1
    }

    /// Unvisited children first in enumeration order, then the highest
    /// `normalized mean + c * sqrt(ln N / n)`. Means are min-max normalized
    /// across siblings so `c` is independent of the reward scale.
    fn select(&self, node: usize) -> usize {
        let n = &self.nodes[node];
        if let Some(i) = n.children.iter().position(|c| c.visits == 0) {
            return i;
        }
        let (lo, hi) = n
            .children
            .iter()
            .map(ChanceNode::mean)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m), hi.max(m)));
        let span = hi - lo;
        let ln_parent = (n.visits.max(1) as f64).ln();
        let mut best = (0, f64::NEG_INFINITY);
        for (i, c) in n.children.iter().enumerate() {
            let exploit = if span > 0.0 { (c.mean() - lo) / span } else { 0.0 };
            let score = exploit + self.cfg.exploration_constant * (ln_parent / c.visits as f64).sqrt();
            if score > best.1 {
                best = (i, score);
            }
        }
        best.0
    }

    /// Follows or samples an outcome of `(node, child)`. Returns the reward,
    /// the successor node, and whether the successor was just created.
    fn outcome<R: Rng + ?Sized>(&mut self, node: usize, child: usize, rng: &mut R) -> Result<(f64, usize, bool)> {
        let chance = &self.nodes[node].children[child];
        if chance.outcomes.len() >= self.cfg.chance_samples {
            let o = &chance.outcomes[rng.random_range(0..chance.outcomes.len())];
            return Ok((o.reward, o.child, false));
        }
        let action = chance.action;
        let depth = self.nodes[node].depth;
        let out = step_with_weights(&self.nodes[node].state, action, rng, self.params, &self.weights)?;
        let chance = &self.nodes[node].children[child];
        if let Some(o) = chance.outcomes.iter().find(|o| o.demands == out.demands_drawn) {
            return Ok((o.reward, o.child, false));
        }
        let child_id = self.new_node(out.next_state, depth + 1);
        self.nodes[node].children[child].outcomes.push(Outcome {
            reward: out.reward,
            demands: out.demands_drawn,
            child: child_id,
        });
        Ok((out.reward, child_id, true))
    }

    fn iterate<R: Rng + ?Sized>(&mut self, root: usize, rng: &mut R) -> Result<()> {
        let gamma = self.params.gamma;
        let mut path: Vec<(usize, usize, f64)> = Vec::new();
        let mut node = root;
        let leaf_value = loop {
            if self.nodes[node].children.is_empty() {
                break 0.0;
            }
            let child = self.select(node);
            let (reward, next, fresh) = self.outcome(node, child, rng)?;
            path.push((node, child, reward));
            node = next;
            if fresh {
                let remaining = self.cfg.max_depth - self.nodes[node].depth;
                break rollout_estimate(&self.nodes[node].state, self.params, self.cfg, rng, remaining)?;
            }
        };
        self.nodes[node].visits += 1;
        let mut g = leaf_value;
        for &(parent, child, reward) in path.iter().rev() {
            g = reward + gamma * g;
            let c = &mut self.nodes[parent].children[child];
            c.visits += 1;
            c.value_sum += g;
            self.nodes[parent].visits += 1;
        }
        Ok(())
    }
}

/// Runs `cfg.iterations` select/expand/simulate/backpropagate passes from
/// `state` and returns the most-visited root action (ties go to the earlier
/// action in enumeration order).
pub fn mcts_search<R: Rng + ?Sized>(
    state: &GridState,
    params: &ScenarioParams,
    cfg: &MctsConfig,
    rng: &mut R,
) -> Result<Action> {
    mcts_search_with_stats(state, params, cfg, rng).map(|s| s.action)
}

pub fn mcts_search_with_stats<R: Rng + ?Sized>(
    state: &GridState,
    params: &ScenarioParams,
    cfg: &MctsConfig,
    rng: &mut R,
) -> Result<SearchStats> {
    cfg.validate()?;
    let mut tree = Tree { nodes: Vec::new(), params, cfg, weights: cfg.weights(params) };
    let root = tree.new_node(state.clone(), 0);
    if tree.nodes[root].children.len() == 1 {
        let action = tree.nodes[root].children[0].action;
        return Ok(SearchStats { action, root_children: vec![(action, 0, 0.0)], iterations: 0, decision_nodes: 1 });
    }
    for _ in 0..cfg.iterations {
        tree.iterate(root, rng)?;
    }
    let children = &tree.nodes[root].children;
    let mut best = 0;
    for (i, c) in children.iter().enumerate() {
        if c.visits > children[best].visits {
            best = i;
        }
    }
    Ok(SearchStats {
        action: children[best].action,
        root_children: children
            .iter()
            .map(|c| (c.action, c.visits, if c.visits > 0 { c.mean() } else { 0.0 }))
            .collect(),
        iterations: cfg.iterations,
        decision_nodes: tree.nodes.len(),
    })
}

/// Plays the rollout policy for `depth_remaining` steps and returns the
/// discounted reward sum under the search weights.
pub fn rollout_estimate<R: Rng + ?Sized>(
    state: &GridState,
    params: &ScenarioParams,
    cfg: &MctsConfig,
    rng: &mut R,
    depth_remaining: usize,
) -> Result<f64> {
    let weights = cfg.weights(params);
    let mut state = state.clone();
    let mut total = 0.0;
    let mut discount = 1.0;
    for _ in 0..depth_remaining {
        let action = match cfg.rollout_policy {
            RolloutPolicy::Random => random_policy(&state, params, rng),
            RolloutPolicy::Expert => expert_policy(&state, params),
        };
        let out = step_with_weights(&state, action, rng, params, &weights)?;
        total += discount * out.reward;
        discount *= params.gamma;
        state = out.next_state;
    }
    Ok(total)
}
