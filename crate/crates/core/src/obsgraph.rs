//! Observability graph and the collaborative search reward.
//!
//! For every free cell `p`, `obs(p)` is the set of free cells visible from its center within
//! the sensing radius. Over a belief field `B` (unnormalized object prior mass, zero on
//! explored cells) the scores are
//!
//! ```text
//! O(p) = Σ_{q ∈ obs(p)} B(q)
//! I(p) = |obs(p)| / Σ_{q ∈ obs(p)} O(q) · O(p)          (0 when the sum is 0)
//! S(p) = O(p)/max O · w_o + I(p)/max I · w_i            (a zero max drops its term)
//! R(p) = ln(S(p)/max S + 1)                             (0 everywhere when max S = 0)
//! ```
//!
//! `R` is exposed to the planner as an attractive, final, selection-only graph-field source.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::srs::{FieldTable, Nature, PolicySet, RewardSource, ShapeSpec, SourceKind, SourceModel};
use crate::worldmap::{CellId, OccupancyGrid};

/// Id under which the search reward source appears in planner snapshots.
pub const SEARCH_SOURCE_ID: &str = "search";

#[derive(Debug, Clone)]
pub struct ObservabilityGraph {
    obs: Vec<Vec<CellId>>,
    sense_radius: f64,
}

impl ObservabilityGraph {
    pub fn build(grid: &OccupancyGrid, sense_radius: f64) -> Self {
        let obs = grid
            .free_cells()
            .map(|cell| grid.visible_cells(&grid.center(cell), sense_radius))
            .collect();
        Self { obs, sense_radius }
    }

    pub fn sense_radius(&self) -> f64 {
        self.sense_radius
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Sorted visible set of one cell.
    pub fn obs(&self, cell: CellId) -> &[CellId] {
        &self.obs[cell.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchWeights {
    pub observability: f64,
    pub isolation: f64,
}

impl Default for SearchWeights {
    fn default() -> Self {
        Self {
            observability: 0.8,
            isolation: 0.2,
        }
    }
}

/// Per-cell object prior mass. A uniform prior is 1 per unexplored cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefField {
    mass: Vec<f64>,
    revision: u64,
}

impl BeliefField {
    pub fn uniform(cells: usize) -> Self {
        Self {
            mass: vec![1.0; cells],
            revision: 0,
        }
    }

    pub fn from_mass(mass: Vec<f64>) -> Self {
        assert!(
            mass.iter().all(|m| *m >= 0.0 && m.is_finite()),
            "belief mass must be non-negative"
        );
        Self { mass, revision: 0 }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, cell: CellId) -> f64 {
        self.mass[cell.0]
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Zeroes the listed cells. Returns how many cells changed.
    pub fn mark_explored<'a>(&mut self, cells: impl IntoIterator<Item = &'a CellId>) -> usize {
        let mut changed = 0;
        for cell in cells {
            let m = &mut self.mass[cell.0];
            if *m != 0.0 {
                *m = 0.0;
                changed += 1;
            }
        }
        if changed > 0 {
            self.revision += 1;
        }
        changed
    }

    /// Replaces the whole field, bumping the revision if anything differs.
    pub fn replace(&mut self, mass: Vec<f64>) {
        assert_eq!(mass.len(), self.mass.len());
        if mass != self.mass {
            self.mass = mass;
            self.revision += 1;
        }
    }
}

/// O(p): belief mass visible from each cell.
pub fn observability(graph: &ObservabilityGraph, belief: &BeliefField) -> Vec<f64> {
    graph
        .obs
        .iter()
        .map(|set| set.iter().map(|q| belief.mass[q.0]).sum())
        .collect()
}

/// I(p): O(p) over the mean observability of the cells visible from p.
pub fn isolation(graph: &ObservabilityGraph, o: &[f64]) -> Vec<f64> {
    graph
        .obs
        .iter()
        .enumerate()
        .map(|(p, set)| {
            let denom: f64 = set.iter().map(|q| o[q.0]).sum();
            if denom > 0.0 {
                set.len() as f64 / denom * o[p]
            } else {
                0.0
            }
        })
        .collect()
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

/// S and R from O and I.
pub fn search_reward(o: &[f64], i: &[f64], weights: SearchWeights) -> (Vec<f64>, Vec<f64>) {
    let (max_o, max_i) = (max_of(o), max_of(i));
    let s: Vec<f64> = o
        .iter()
        .zip(i)
        .map(|(&op, &ip)| {
            let a = if max_o > 0.0 {
                op / max_o * weights.observability
            } else {
                0.0
            };
            let b = if max_i > 0.0 {
                ip / max_i * weights.isolation
            } else {
                0.0
            };
            a + b
        })
        .collect();
    let max_s = max_of(&s);
    let r = if max_s > 0.0 {
        s.iter().map(|sp| (sp / max_s + 1.0).ln()).collect()
    } else {
        vec![0.0; s.len()]
    };
    (s, r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchScores {
    pub o: Vec<f64>,
    pub i: Vec<f64>,
    pub s: Vec<f64>,
    pub r: Vec<f64>,
    pub weights: SearchWeights,
}

impl SearchScores {
    pub fn compute(
        graph: &ObservabilityGraph,
        belief: &BeliefField,
        weights: SearchWeights,
    ) -> Self {
        let o = observability(graph, belief);
        let i = isolation(graph, &o);
        let (s, r) = search_reward(&o, &i, weights);
        Self {
            o,
            i,
            s,
            r,
            weights,
        }
    }

    /// Cell with the highest R, lowest id on ties.
    pub fn argmax(&self) -> Option<CellId> {
        argmax(&self.r)
    }

    pub fn as_source(&self, grid: &OccupancyGrid) -> RewardSource {
        as_source(grid, &self.r)
    }
}

pub fn argmax(values: &[f64]) -> Option<CellId> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| CellId(k))
}

/// Wraps a per-cell reward as a final-nature, selection-only attractive source.
///
/// The footprint center is placed at the reward's peak cell.
pub fn as_source(grid: &OccupancyGrid, r: &[f64]) -> RewardSource {
    let mut values = vec![None; grid.width() * grid.height()];
    for cell in grid.free_cells() {
        values[grid.grid_index(cell)] = Some(r[cell.0]);
    }
    let table = Arc::new(FieldTable {
        frame: *grid.frame(),
        values,
    });
    let peak = argmax(r)
        .map(|c| grid.center(c))
        .unwrap_or_else(|| grid.center(CellId(0)));
    RewardSource::new(
        SEARCH_SOURCE_ID,
        SourceKind::Attractive,
        PolicySet::SELECTION,
        Nature::Final,
        SourceModel::GraphField { table },
        ShapeSpec::point(peak.x, peak.y),
    )
}

/// Recomputes scores only when the belief revision moves.
#[derive(Debug, Clone, Default)]
pub struct ScoreCache {
    key: Option<(u64, usize)>,
    scores: Option<Arc<SearchScores>>,
}

impl ScoreCache {
    /// `epoch` distinguishes belief fields that may share a revision number.
    pub fn get(
        &mut self,
        graph: &ObservabilityGraph,
        belief: &BeliefField,
        epoch: usize,
        weights: SearchWeights,
    ) -> Arc<SearchScores> {
        let key = (belief.revision(), epoch);
        match &self.scores {
            Some(scores) if self.key == Some(key) && scores.weights == weights => scores.clone(),
            _ => {
                let scores = Arc::new(SearchScores::compute(graph, belief, weights));
                self.key = Some(key);
                self.scores = Some(scores.clone());
                scores
            }
        }
    }
}

/// Debug raster of all four score layers in the map text format, blocked cells as null.
pub fn score_raster(grid: &OccupancyGrid, scores: &SearchScores) -> serde_json::Value {
    let layer = |values: &[f64]| -> Vec<Vec<Option<f64>>> {
        (0..grid.height())
            .map(|iy| {
                (0..grid.width())
                    .map(|ix| grid.cell_at_coords(ix, iy).map(|c| values[c.0]))
                    .collect()
            })
            .collect()
    };
    let mut map = grid.to_json();
    map["layers"] = serde_json::json!({
        "O": layer(&scores.o),
        "I": layer(&scores.i),
        "S": layer(&scores.s),
        "R": layer(&scores.r),
    });
    map["weights"] = serde_json::to_value(scores.weights).unwrap_or_default();
    map
}
