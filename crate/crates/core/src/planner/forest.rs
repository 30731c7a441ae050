//! Multi-tree RRT* forest.
//!
//! All trees share one node arena. Each expansion draws one sample; the first tree (by id)
//! that can extend toward it inserts the steered node, and every later tree that can connect
//! to that same node is merged into the first one by re-rooting its branch through the shared
//! node. Node 0 is always the root of tree 0.

use std::collections::VecDeque;

use rand::Rng;

use super::cost::PolicyCosts;
use super::index::SpatialIndex;
use super::PlannerConfig;
use crate::srs::{Policy, SourceSet};
use crate::worldmap::{OccupancyGrid, Pose};

pub type NodeId = u32;

const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PlanNode {
    pub position: Pose,
    pub parent: Option<NodeId>,
    pub tree: u32,
    /// C^{gen,cm} to this node.
    pub cum_cost: f64,
    /// Euclidean length of the path from the root.
    pub path_length: f64,
    children: Vec<NodeId>,
    /// Σ_j s_j at this node over generation-cumulative sources.
    density: f64,
}

#[derive(Debug, Clone)]
pub struct Forest<'a> {
    grid: &'a OccupancyGrid,
    costs: PolicyCosts<'a>,
    config: PlannerConfig,
    nodes: Vec<PlanNode>,
    /// Per-node |s_j| of generation-consumable sources, stride = source count.
    cons_local: Vec<f64>,
    /// Per-node running max of |s_j| along the root path.
    cons_max: Vec<f64>,
    roots: Vec<NodeId>,
    active: Vec<bool>,
    index: SpatialIndex,
    free_area: f64,
    scratch: Vec<f64>,
}

impl<'a> Forest<'a> {
    /// One tree per origin, in order. Origins must lie in free space.
    pub fn new(
        grid: &'a OccupancyGrid,
        sources: &'a SourceSet,
        origins: &[Pose],
        config: &PlannerConfig,
        time: f64,
    ) -> Self {
        let costs = PolicyCosts::new(sources, Policy::Generation, config.lambda, time);
        let bucket = config
            .neighbor_radius
            .max(config.step_size)
            .max(grid.resolution());
        let mut forest = Self {
            grid,
            costs,
            config: config.clone(),
            nodes: Vec::new(),
            cons_local: Vec::new(),
            cons_max: Vec::new(),
            roots: Vec::new(),
            active: Vec::new(),
            index: SpatialIndex::new(grid.bounds(), bucket),
            free_area: grid.free_count() as f64 * grid.resolution().powi(2),
            scratch: Vec::new(),
        };
        for (tree, origin) in origins.iter().enumerate() {
            let id = forest.push_node(*origin, None, tree as u32);
            forest.roots.push(id);
            forest.active.push(true);
        }
        forest
    }

    fn stride(&self) -> usize {
        self.costs.consumable.len()
    }

    fn push_node(&mut self, position: Pose, parent: Option<NodeId>, tree: u32) -> NodeId {
        let id = self.nodes.len() as NodeId;
        let density = self.costs.cumulative_density(&position);
        let mut local = std::mem::take(&mut self.scratch);
        self.costs.consumable_magnitudes(&position, &mut local);
        self.cons_local.extend_from_slice(&local);
        self.cons_max.extend_from_slice(&local);
        self.scratch = local;
        self.nodes.push(PlanNode {
            position,
            parent: None,
            tree,
            cum_cost: 0.0,
            path_length: 0.0,
            children: Vec::new(),
            density,
        });
        self.index.insert(id, &position);
        if let Some(p) = parent {
            self.attach(id, p);
            self.refresh_from_parent(id);
        }
        id
    }

    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    /// Ids of trees that have not been merged away.
    pub fn active_trees(&self) -> Vec<u32> {
        (0..self.roots.len() as u32)
            .filter(|&t| self.active[t as usize])
            .collect()
    }

    pub fn node(&self, id: NodeId) -> &PlanNode {
        &self.nodes[id as usize]
    }

    pub fn consumable_max(&self, id: NodeId) -> &[f64] {
        let k = self.stride();
        &self.cons_max[id as usize * k..(id as usize + 1) * k]
    }

    /// Stored C^{gen} of a node.
    pub fn gen_cost(&self, id: NodeId) -> f64 {
        self.node(id).cum_cost + self.costs.consumable_term(self.consumable_max(id))
    }

    /// Root-to-node waypoint list.
    pub fn path_to(&self, id: NodeId) -> Vec<Pose> {
        let mut path = vec![self.node(id).position];
        let mut cur = id;
        while let Some(p) = self.node(cur).parent {
            path.push(self.node(p).position);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Byte-level digest of topology and positions.
    pub fn fingerprint(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.nodes.len() * 24);
        for n in &self.nodes {
            out.extend_from_slice(&n.position.x.to_bits().to_le_bytes());
            out.extend_from_slice(&n.position.y.to_bits().to_le_bytes());
            out.extend_from_slice(&n.parent.map_or(u32::MAX, |p| p).to_le_bytes());
            out.extend_from_slice(&n.tree.to_le_bytes());
        }
        out
    }

    /// Largest deviation between stored C^{gen} and a from-scratch recomputation along
    /// parent links.
    pub fn consistency_error(&self) -> f64 {
        (0..self.nodes.len() as NodeId)
            .map(|id| {
                let fresh = self.costs.path_cost(&self.path_to(id));
                let cm = (fresh.cumulative - self.node(id).cum_cost).abs();
                let total = (fresh.total() - self.gen_cost(id)).abs();
                cm.max(total)
            })
            .fold(0.0, f64::max)
    }

    fn attach(&mut self, child: NodeId, parent: NodeId) {
        if let Some(old) = self.nodes[child as usize].parent {
            self.nodes[old as usize].children.retain(|&c| c != child);
        }
        self.nodes[child as usize].parent = Some(parent);
        self.nodes[parent as usize].children.push(child);
    }

    /// State a node would have if attached under `parent`.
    fn state_via(
        &self,
        parent: NodeId,
        child_pos: &Pose,
        child_density: f64,
        child_local: &[f64],
        out: &mut Vec<f64>,
    ) -> (f64, f64) {
        let p = self.node(parent);
        let d = p.position.distance(child_pos);
        let cum = p.cum_cost + self.costs.edge_cost(child_density, d);
        out.clear();
        out.extend(
            self.consumable_max(parent)
                .iter()
                .zip(child_local)
                .map(|(a, b)| a.max(*b)),
        );
        (cum, p.path_length + d)
    }

    fn refresh_from_parent(&mut self, id: NodeId) {
        let k = self.stride();
        let i = id as usize;
        match self.nodes[i].parent {
            None => {
                self.nodes[i].cum_cost = 0.0;
                self.nodes[i].path_length = 0.0;
                let (local, max) = (&self.cons_local[i * k..(i + 1) * k], i * k);
                let local = local.to_vec();
                self.cons_max[max..max + k].copy_from_slice(&local);
            }
            Some(p) => {
                let pos = self.nodes[i].position;
                let density = self.nodes[i].density;
                let local = self.cons_local[i * k..(i + 1) * k].to_vec();
                let mut buf = std::mem::take(&mut self.scratch);
                let (cum, len) = self.state_via(p, &pos, density, &local, &mut buf);
                self.nodes[i].cum_cost = cum;
                self.nodes[i].path_length = len;
                self.cons_max[i * k..(i + 1) * k].copy_from_slice(&buf);
                self.scratch = buf;
            }
        }
    }

    fn propagate(&mut self, from: NodeId) {
        let mut queue: VecDeque<NodeId> =
            self.nodes[from as usize].children.iter().copied().collect();
        while let Some(id) = queue.pop_front() {
            self.refresh_from_parent(id);
            queue.extend(self.nodes[id as usize].children.iter().copied());
        }
    }

    fn is_ancestor(&self, maybe_ancestor: NodeId, mut id: NodeId) -> bool {
        loop {
            if id == maybe_ancestor {
                return true;
            }
            match self.node(id).parent {
                Some(p) => id = p,
                None => return false,
            }
        }
    }

    fn clear(&self, a: &Pose, b: &Pose) -> bool {
        self.grid.line_of_sight(a, b)
    }

    fn radius(&self) -> f64 {
        if !self.config.shrinking_radius {
            return self.config.neighbor_radius;
        }
        let n = self.nodes.len().max(2) as f64;
        let gamma = 2.0 * 1.5f64.sqrt() * (self.free_area / std::f64::consts::PI).sqrt() * 1.1;
        (gamma * (n.ln() / n).sqrt())
            .min(self.config.neighbor_radius)
            .max(self.config.step_size)
    }

    fn near_in_tree(&self, p: &Pose, radius: f64, tree: u32) -> Vec<NodeId> {
        let nodes = &self.nodes;
        self.index.near(
            p,
            radius,
            |id| nodes[id as usize].position,
            |id| nodes[id as usize].tree == tree,
        )
    }

    fn nearest_in_tree(&self, p: &Pose, tree: u32) -> Option<NodeId> {
        let nodes = &self.nodes;
        self.index.nearest(
            p,
            |id| nodes[id as usize].position,
            |id| nodes[id as usize].tree == tree,
        )
    }

    /// Uniform over free cells, then uniform inside the cell.
    pub fn sample(&self, rng: &mut impl Rng) -> Pose {
        let cell = crate::worldmap::CellId(rng.gen_range(0..self.grid.free_count()));
        let c = self.grid.center(cell);
        let h = self.grid.resolution() / 2.0;
        Pose::new(c.x + rng.gen_range(-h..h), c.y + rng.gen_range(-h..h))
    }

    /// One expansion step. Returns whether any node was inserted.
    pub fn expand(&mut self, rng: &mut impl Rng) -> bool {
        let target = self.sample(rng);
        self.expand_toward(target)
    }

    pub fn expand_toward(&mut self, target: Pose) -> bool {
        let radius = self.radius();
        let mut inserted: Option<(NodeId, u32)> = None;
        for tree in self.active_trees() {
            if !self.active[tree as usize] {
                continue;
            }
            match inserted {
                None => inserted = self.extend(tree, &target, radius).map(|id| (id, tree)),
                Some((node, first)) => self.try_merge(node, first, tree, radius),
            }
        }
        inserted.is_some()
    }

    fn extend(&mut self, tree: u32, target: &Pose, radius: f64) -> Option<NodeId> {
        let nearest = self.nearest_in_tree(target, tree)?;
        let from = self.node(nearest).position;
        let d = from.distance(target);
        if d <= f64::EPSILON {
            return None;
        }
        let pos = if d <= self.config.step_size {
            *target
        } else {
            let s = self.config.step_size / d;
            Pose::new(
                from.x + (target.x - from.x) * s,
                from.y + (target.y - from.y) * s,
            )
        };
        if !self.grid.is_free(&pos) || !self.clear(&from, &pos) {
            return None;
        }

        // Choose the parent minimizing C^{gen} among clear near nodes.
        let density = self.costs.cumulative_density(&pos);
        let mut local = Vec::new();
        self.costs.consumable_magnitudes(&pos, &mut local);
        let mut near = self.near_in_tree(&pos, radius, tree);
        if !near.contains(&nearest) {
            near.push(nearest);
        }
        let mut buf = Vec::new();
        let mut candidates: Vec<(f64, f64, NodeId)> = near
            .iter()
            .map(|&id| {
                let (cum, len) = self.state_via(id, &pos, density, &local, &mut buf);
                (cum + self.costs.consumable_term(&buf), len, id)
            })
            .collect();
        let order = |a: &(f64, f64, NodeId), b: &(f64, f64, NodeId)| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.cmp(&b.2))
        };
        let usable = |id: NodeId| id == nearest || self.clear(&self.node(id).position, &pos);
        let best = candidates.iter().copied().min_by(order).map(|c| c.2)?;
        let parent = if usable(best) {
            best
        } else {
            candidates.sort_by(order);
            candidates
                .iter()
                .skip(1)
                .find(|c| usable(c.2))
                .map(|c| c.2)?
        };

        let id = self.push_node(pos, Some(parent), tree);
        self.rewire(id, &near);
        Some(id)
    }

    /// Re-parents near nodes through `hub` where that strictly lowers their cost without
    /// worsening any component, then pushes new costs down their subtrees.
    fn rewire(&mut self, hub: NodeId, near: &[NodeId]) {
        let k = self.stride();
        let hub_pos = self.node(hub).position;
        let tree = self.node(hub).tree;
        let mut buf = Vec::new();
        for &m in near {
            if m == hub || self.node(hub).parent == Some(m) || self.node(m).tree != tree {
                continue;
            }
            let mi = m as usize;
            let (pos, density) = (self.nodes[mi].position, self.nodes[mi].density);
            let local = &self.cons_local[mi * k..(mi + 1) * k];
            let (cum, _) = self.state_via(hub, &pos, density, local, &mut buf);
            let old_cum = self.nodes[mi].cum_cost;
            let old_max = self.consumable_max(m);
            let new_total = cum + self.costs.consumable_term(&buf);
            let old_total = old_cum + self.costs.consumable_term(old_max);
            if !(new_total < old_total - IMPROVEMENT_EPS
                && cum <= old_cum
                && self.costs.consumables_dominate(&buf, old_max))
            {
                continue;
            }
            if self.nodes[mi].parent.is_none() || self.is_ancestor(m, hub) {
                continue;
            }
            if !self.clear(&hub_pos, &pos) {
                continue;
            }
            self.attach(m, hub);
            self.refresh_from_parent(m);
            self.propagate(m);
        }
    }

    fn try_merge(&mut self, node: NodeId, first: u32, tree: u32, radius: f64) {
        let pos = self.node(node).position;
        let near = self.near_in_tree(&pos, radius, tree);
        let Some(bridge) = near
            .iter()
            .copied()
            .filter(|&id| self.clear(&self.node(id).position, &pos))
            .min_by(|&a, &b| {
                self.node(a)
                    .position
                    .distance(&pos)
                    .total_cmp(&self.node(b).position.distance(&pos))
                    .then(a.cmp(&b))
            })
        else {
            return;
        };
        self.merge(node, first, tree, bridge);
    }

    /// Absorbs `tree` into `into` by reversing the bridge node's root path and hanging it
    /// from `node`, then recomputes costs and runs a rewire pass over the merged tree.
    fn merge(&mut self, node: NodeId, into: u32, tree: u32, bridge: NodeId) {
        let mut chain = vec![bridge];
        let mut cur = bridge;
        while let Some(p) = self.node(cur).parent {
            chain.push(p);
            cur = p;
        }
        let mut prev = node;
        for &c in &chain {
            self.attach(c, prev);
            prev = c;
        }
        for n in self.nodes.iter_mut().filter(|n| n.tree == tree) {
            n.tree = into;
        }
        self.active[tree as usize] = false;
        self.refresh_from_parent(bridge);
        self.propagate(bridge);

        let radius = self.radius();
        let mut order = Vec::new();
        let mut queue = VecDeque::from([self.roots[into as usize]]);
        while let Some(id) = queue.pop_front() {
            order.push(id);
            queue.extend(self.node(id).children.iter().copied());
        }
        for id in order {
            let near = self.near_in_tree(&self.node(id).position, radius, into);
            self.rewire(id, &near);
        }
    }
}
