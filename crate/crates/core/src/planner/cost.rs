//! Path cost terms.
//!
//! For a path `P_n` ending at node `n`, with `s_j(i)` the cost-mirrored value of source `j`
//! at node `i` and `d` the edge length:
//!
//! - cumulative: `Σ_i (Σ_j s_j(i)·d_{i-1,i} + λ·d_{i-1,i})`
//! - consumable: one term per source, `∓ max_i |s_j(i)|` (negative for attractive sources)
//! - final: `Σ_j s_j(n)`, selection only
//!
//! Generation costs drive tree growth; selection costs rank the finished tree.

use serde::{Deserialize, Serialize};

use crate::srs::{Nature, Policy, RewardSource, SourceKind, SourceSet};
use crate::worldmap::Pose;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub cumulative: f64,
    pub consumable: f64,
    #[serde(rename = "final")]
    pub final_term: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.cumulative + self.consumable + self.final_term
    }
}

/// Sources of one policy split by nature, evaluated at a fixed time.
#[derive(Debug, Clone)]
pub struct PolicyCosts<'a> {
    pub cumulative: Vec<&'a RewardSource>,
    pub consumable: Vec<&'a RewardSource>,
    pub finals: Vec<&'a RewardSource>,
    pub lambda: f64,
    pub time: f64,
}

impl<'a> PolicyCosts<'a> {
    pub fn new(sources: &'a SourceSet, policy: Policy, lambda: f64, time: f64) -> Self {
        Self {
            cumulative: sources.sources_by(policy, Nature::Cumulative),
            consumable: sources.sources_by(policy, Nature::Consumable),
            finals: if policy == Policy::Selection {
                sources.sources_by(policy, Nature::Final)
            } else {
                Vec::new()
            },
            lambda,
            time,
        }
    }

    /// Σ_j s_j(p) over cumulative sources: cost per meter entering `p`.
    pub fn cumulative_density(&self, p: &Pose) -> f64 {
        self.cumulative
            .iter()
            .map(|s| s.cost_at(p, self.time))
            .sum()
    }

    pub fn edge_cost(&self, density_at_child: f64, length: f64) -> f64 {
        (density_at_child + self.lambda) * length
    }

    /// |s_j(p)| for every consumable source, in order.
    pub fn consumable_magnitudes(&self, p: &Pose, out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.consumable
                .iter()
                .map(|s| s.cost_at(p, self.time).abs()),
        );
    }

    /// Signed contribution of per-source running maxima of |s|.
    pub fn consumable_term(&self, running_max: &[f64]) -> f64 {
        self.consumable
            .iter()
            .zip(running_max)
            .map(|(s, m)| match s.kind {
                SourceKind::Attractive => -m,
                SourceKind::Repulsive => *m,
            })
            .sum()
    }

    pub fn final_term(&self, p: &Pose) -> f64 {
        self.finals.iter().map(|s| s.cost_at(p, self.time)).sum()
    }

    /// Whether a consumable state `a` is at least as good as `b` for every source.
    pub fn consumables_dominate(&self, a: &[f64], b: &[f64]) -> bool {
        self.consumable
            .iter()
            .zip(a.iter().zip(b))
            .all(|(s, (x, y))| match s.kind {
                SourceKind::Attractive => x >= y,
                SourceKind::Repulsive => x <= y,
            })
    }

    /// Full cost of an explicit waypoint path, computed from scratch.
    pub fn path_cost(&self, path: &[Pose]) -> CostBreakdown {
        let Some(last) = path.last() else {
            return CostBreakdown::default();
        };
        let mut cumulative = 0.0;
        for w in path.windows(2) {
            let d = w[0].distance(&w[1]);
            cumulative += self.edge_cost(self.cumulative_density(&w[1]), d);
        }
        let mut running = vec![0.0_f64; self.consumable.len()];
        let mut scratch = Vec::new();
        for p in path {
            self.consumable_magnitudes(p, &mut scratch);
            for (m, v) in running.iter_mut().zip(&scratch) {
                *m = m.max(*v);
            }
        }
        CostBreakdown {
            cumulative,
            consumable: self.consumable_term(&running),
            final_term: self.final_term(last),
        }
    }
}

/// C^{gen} of an explicit path.
pub fn gen_cost(path: &[Pose], sources: &SourceSet, lambda: f64, time: f64) -> CostBreakdown {
    PolicyCosts::new(sources, Policy::Generation, lambda, time).path_cost(path)
}

/// C^{sel} of an explicit path.
pub fn sel_cost(path: &[Pose], sources: &SourceSet, lambda: f64, time: f64) -> CostBreakdown {
    PolicyCosts::new(sources, Policy::Selection, lambda, time).path_cost(path)
}
