//! Sourced RRT*: multi-tree RRT* grown under generation-policy source costs, with the
//! returned path chosen by selection-policy source costs.
//!
//! There is no goal region. After expansion every node of the robot's tree is ranked by its
//! selection cost and the cheapest node's root path becomes the plan.

mod cost;
mod forest;
mod index;

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cost::{gen_cost, sel_cost, CostBreakdown, PolicyCosts};
pub use forest::{Forest, NodeId, PlanNode};

use crate::srs::{Nature, Policy, SourceKind, SourceSet};
use crate::worldmap::{OccupancyGrid, Pose};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("robot pose ({x:.3}, {y:.3}) is not in free space")]
    BlockedStart { x: f64, y: f64 },
    #[error("empty forest")]
    EmptyForest,
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Steering step in meters.
    pub step_size: f64,
    /// Near-neighbour radius for parent choice, rewiring and tree merging.
    pub neighbor_radius: f64,
    /// Use the RRT* `γ·(ln n / n)^½` radius, capped by `neighbor_radius`.
    pub shrinking_radius: bool,
    pub max_nodes: usize,
    /// Wall-clock cap on expansion. `None` keeps plans a pure function of the seed.
    pub time_budget_ms: Option<u64>,
    /// Connection cost per meter.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            step_size: 1.0,
            neighbor_radius: 3.0,
            shrinking_radius: false,
            max_nodes: 3000,
            time_budget_ms: Some(150),
            lambda: 1.0,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(PlanError::InvalidConfig(
                "step_size must be positive".into(),
            ));
        }
        if !(self.neighbor_radius > 0.0 && self.neighbor_radius.is_finite()) {
            return Err(PlanError::InvalidConfig(
                "neighbor_radius must be positive".into(),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(PlanError::InvalidConfig(
                "lambda must be non-negative".into(),
            ));
        }
        if self.max_nodes < 1 {
            return Err(PlanError::InvalidConfig(
                "max_nodes must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeCost {
    pub length: f64,
    pub connection: f64,
    /// Σ_j s_j·d over selection-cumulative sources.
    pub sources: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    pub waypoints: Vec<Pose>,
    /// C^{sel} of the selected node.
    pub cost: f64,
    pub breakdown: CostBreakdown,
    pub edges: Vec<EdgeCost>,
    pub node: NodeId,
    pub forest_size: usize,
}

impl Plan {
    pub fn length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn endpoint(&self) -> Pose {
        *self
            .waypoints
            .last()
            .expect("plans have at least one waypoint")
    }
}

/// Robot pose first, then the centers of attractive consumable/final generation-policy
/// sources lying in free space, dropping any within `step_size` of an earlier origin.
pub fn get_tree_origins(
    grid: &OccupancyGrid,
    sources: &SourceSet,
    robot: Pose,
    step_size: f64,
    time: f64,
) -> Vec<Pose> {
    let mut origins = vec![Pose::new(robot.x, robot.y)];
    for nature in [Nature::Consumable, Nature::Final] {
        for s in sources.sources_by(Policy::Generation, nature) {
            if s.kind != SourceKind::Attractive {
                continue;
            }
            let c = s.center_at(time);
            let c = Pose::new(c.x, c.y);
            if !grid.is_free(&c) || origins.iter().any(|o| o.distance(&c) <= step_size) {
                continue;
            }
            origins.push(c);
        }
    }
    origins
}

/// Grows a forest from the tree origins until `max_nodes` or the time budget.
pub fn grow<'a>(
    grid: &'a OccupancyGrid,
    sources: &'a SourceSet,
    robot: Pose,
    config: &PlannerConfig,
    time: f64,
) -> Result<Forest<'a>, PlanError> {
    config.validate()?;
    if !grid.is_free(&robot) {
        return Err(PlanError::BlockedStart {
            x: robot.x,
            y: robot.y,
        });
    }
    let origins = get_tree_origins(grid, sources, robot, config.step_size, time);
    let mut forest = Forest::new(grid, sources, &origins, config, time);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let started = Instant::now();
    let budget = config.time_budget_ms.map(Duration::from_millis);
    let max_iterations = config.max_nodes.saturating_mul(50).max(1000);
    let mut iterations = 0;
    while forest.len() < config.max_nodes && iterations < max_iterations {
        if budget.is_some_and(|b| started.elapsed() >= b) {
            break;
        }
        forest.expand(&mut rng);
        iterations += 1;
    }
    Ok(forest)
}

/// Ranks every node of the robot's tree by C^{sel} and returns the cheapest root path.
/// Ties go to the shorter path, then the lower node id.
pub fn select(
    forest: &Forest<'_>,
    sources: &SourceSet,
    lambda: f64,
    time: f64,
) -> Result<Plan, PlanError> {
    let root = *forest.roots().first().ok_or(PlanError::EmptyForest)?;
    let costs = PolicyCosts::new(sources, Policy::Selection, lambda, time);
    let k = costs.consumable.len();
    let n = forest.len();
    let mut cum = vec![0.0; n];
    let mut cons = vec![0.0; n * k];
    let mut local = Vec::new();

    // Top-down over the robot tree; children lists are implied by parent links.
    let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for (id, node) in forest.nodes().iter().enumerate() {
        if let Some(p) = node.parent {
            children[p as usize].push(id as NodeId);
        }
    }
    let mut best: Option<(f64, f64, NodeId)> = None;
    let mut queue = VecDeque::from([root]);
    while let Some(id) = queue.pop_front() {
        let node = forest.node(id);
        let i = id as usize;
        costs.consumable_magnitudes(&node.position, &mut local);
        match node.parent {
            None => cons[i * k..(i + 1) * k].copy_from_slice(&local),
            Some(p) => {
                let pi = p as usize;
                let d = forest.node(p).position.distance(&node.position);
                cum[i] = cum[pi] + costs.edge_cost(costs.cumulative_density(&node.position), d);
                for j in 0..k {
                    cons[i * k + j] = cons[pi * k + j].max(local[j]);
                }
            }
        }
        let total = cum[i]
            + costs.consumable_term(&cons[i * k..(i + 1) * k])
            + costs.final_term(&node.position);
        let better = match best {
            None => true,
            Some((bc, bl, bid)) => {
                total < bc
                    || (total == bc
                        && (node.path_length < bl || (node.path_length == bl && id < bid)))
            }
        };
        if better {
            best = Some((total, node.path_length, id));
        }
        queue.extend(children[i].iter().copied());
    }
    let (_, _, chosen) = best.ok_or(PlanError::EmptyForest)?;
    let waypoints = forest.path_to(chosen);
    let breakdown = costs.path_cost(&waypoints);
    let edges = waypoints
        .windows(2)
        .map(|w| {
            let length = w[0].distance(&w[1]);
            EdgeCost {
                length,
                connection: lambda * length,
                sources: costs.cumulative_density(&w[1]) * length,
            }
        })
        .collect();
    Ok(Plan {
        waypoints,
        cost: breakdown.total(),
        breakdown,
        edges,
        node: chosen,
        forest_size: forest.len(),
    })
}

/// Full planning cycle: origins, expansion, selection.
pub fn plan(
    grid: &OccupancyGrid,
    sources: &SourceSet,
    robot: Pose,
    config: &PlannerConfig,
    time: f64,
) -> Result<Plan, PlanError> {
    let forest = grow(grid, sources, robot, config, time)?;
    select(&forest, sources, config.lambda, time)
}
