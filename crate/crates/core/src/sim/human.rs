use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::obsgraph::{BeliefField, ObservabilityGraph, SearchScores, SearchWeights};
use crate::worldmap::{CellId, OccupancyGrid, Pose};

const LOOKAHEAD: usize = 6;
const ARRIVED: f64 = 0.05;

/// 8-connected free neighbours; diagonal steps need both orthogonal cells free.
pub fn neighbors(grid: &OccupancyGrid, cell: CellId) -> impl Iterator<Item = (CellId, f64)> + '_ {
    let (ix, iy) = grid.coords(cell);
    let free = move |dx: i64, dy: i64| {
        let (x, y) = (ix as i64 + dx, iy as i64 + dy);
        if x < 0 || y < 0 {
            return None;
        }
        grid.cell_at_coords(x as usize, y as usize)
    };
    const STEPS: [(i64, i64); 8] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
    ];
    STEPS.into_iter().filter_map(move |(dx, dy)| {
        let to = free(dx, dy)?;
        if dx != 0 && dy != 0 {
            free(dx, 0)?;
            free(0, dy)?;
            Some((to, std::f64::consts::SQRT_2))
        } else {
            Some((to, 1.0))
        }
    })
}

/// Grid path length from every free cell to `target` (infinite when unreachable).
pub fn grid_distances(grid: &OccupancyGrid, target: CellId) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; grid.free_count()];
    let mut heap = BinaryHeap::new();
    dist[target.0] = 0.0;
    heap.push(Reverse((0f64.to_bits(), target.0)));
    while let Some(Reverse((bits, k))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[k] {
            continue;
        }
        for (n, w) in neighbors(grid, CellId(k)) {
            let nd = d + w;
            if nd < dist[n.0] {
                dist[n.0] = nd;
                heap.push(Reverse((nd.to_bits(), n.0)));
            }
        }
    }
    dist
}

/// Greedy searcher standing in for a participant: heads for the peak of the search reward
/// computed on the jointly explored area.
#[derive(Debug, Clone)]
pub struct ScriptedHuman {
    belief: BeliefField,
    scores: Option<SearchScores>,
    refreshed_at: f64,
    refresh: f64,
    weights: SearchWeights,
    target: Option<CellId>,
    field: Option<(CellId, Vec<f64>)>,
}

impl ScriptedHuman {
    pub fn new(cells: usize, refresh: f64, weights: SearchWeights) -> Self {
        Self {
            belief: BeliefField::uniform(cells),
            scores: None,
            refreshed_at: f64::NEG_INFINITY,
            refresh,
            weights,
            target: None,
            field: None,
        }
    }

    /// Records cells the human now knows are explored.
    pub fn observe(&mut self, cells: &[CellId]) {
        self.belief.mark_explored(cells);
    }

    pub fn target(&self) -> Option<CellId> {
        self.target
    }

    pub fn scores(&self) -> Option<&SearchScores> {
        self.scores.as_ref()
    }

    /// Distance field toward the current target, if any.
    pub fn distances(&self) -> Option<&[f64]> {
        self.field.as_ref().map(|(_, d)| d.as_slice())
    }

    /// Velocity for this tick, at most `max_speed`.
    pub fn command(
        &mut self,
        grid: &OccupancyGrid,
        graph: &ObservabilityGraph,
        pose: Pose,
        max_speed: f64,
        dt: f64,
        now: f64,
    ) -> [f64; 2] {
        if max_speed <= 0.0 {
            return [0.0, 0.0];
        }
        let Some(here) = grid.cell_at(&pose) else {
            return [0.0, 0.0];
        };
        let arrived = self
            .target
            .is_some_and(|t| t == here && grid.center(t).distance(&pose) < ARRIVED);
        if self.scores.is_none() || arrived || now - self.refreshed_at >= self.refresh - 1e-9 {
            self.scores = Some(SearchScores::compute(graph, &self.belief, self.weights));
            self.refreshed_at = now;
        }
        let scores = self.scores.as_ref().expect("scores computed above");
        let peak = scores.r.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            self.target = None;
            return [0.0, 0.0];
        }
        let stale = match self.target {
            None => true,
            Some(t) => scores.r[t.0] < 0.5 * peak || (arrived && t == here),
        };
        if stale {
            self.target = scores.argmax();
        }
        let target = self.target.expect("peak is positive");
        if self.field.as_ref().is_none_or(|(t, _)| *t != target) {
            self.field = Some((target, grid_distances(grid, target)));
        }
        let dist = &self.field.as_ref().expect("field computed above").1;
        if !dist[here.0].is_finite() {
            return [0.0, 0.0];
        }

        // Farthest cell of the descent chain in plain view.
        let mut aim = grid.center(here);
        let mut cell = here;
        for step in 0..LOOKAHEAD {
            let next = neighbors(grid, cell)
                .filter(|(n, _)| dist[n.0] < dist[cell.0])
                .min_by(|a, b| dist[a.0 .0].total_cmp(&dist[b.0 .0]).then(a.0.cmp(&b.0)));
            let Some((next, _)) = next else { break };
            let c = grid.center(next);
            if step > 0 && !grid.line_of_sight(&pose, &c) {
                break;
            }
            aim = c;
            cell = next;
        }
        let (dx, dy) = (aim.x - pose.x, aim.y - pose.y);
        let d = dx.hypot(dy);
        if d < 1e-12 {
            return [0.0, 0.0];
        }
        let speed = max_speed.min(d / dt);
        [dx / d * speed, dy / d * speed]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances_match_hand_values() {
        let g = OccupancyGrid::from_rows(&["...", ".#.", "..."], 1.0, [0.0, 0.0]).unwrap();
        let corner = g.cell_at(&Pose::new(0.5, 0.5)).unwrap();
        let d = grid_distances(&g, corner);
        let far = g.cell_at(&Pose::new(2.5, 2.5)).unwrap();
        // No corner cutting past the pillar, so the way round is four straight steps.
        assert_eq!(d[far.0], 4.0);
        let side = g.cell_at(&Pose::new(1.5, 0.5)).unwrap();
        assert_eq!(d[side.0], 1.0);
        let diag = g.cell_at(&Pose::new(2.5, 1.5)).unwrap();
        assert_eq!(d[diag.0], 3.0);
        let open = OccupancyGrid::new(3, 3, 1.0, [0.0, 0.0], vec![false; 9]).unwrap();
        let d = grid_distances(&open, CellId(0));
        assert!((d[8] - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn explored_map_gives_zero_velocity() {
        let g = OccupancyGrid::new(4, 4, 1.0, [0.0, 0.0], vec![false; 16]).unwrap();
        let graph = ObservabilityGraph::build(&g, 8.0);
        let mut h = ScriptedHuman::new(g.free_count(), 1.0, SearchWeights::default());
        let all: Vec<CellId> = g.free_cells().collect();
        h.observe(&all);
        assert_eq!(
            h.command(&g, &graph, Pose::new(0.5, 0.5), 1.0, 0.1, 0.0),
            [0.0, 0.0]
        );
    }

    #[test]
    fn speed_is_clamped() {
        let g = OccupancyGrid::new(10, 3, 1.0, [0.0, 0.0], vec![false; 30]).unwrap();
        let graph = ObservabilityGraph::build(&g, 2.0);
        let mut h = ScriptedHuman::new(g.free_count(), 1.0, SearchWeights::default());
        let v = h.command(&g, &graph, Pose::new(0.5, 1.5), 1.0, 0.1, 0.0);
        assert!(v[0].hypot(v[1]) <= 1.0 + 1e-12);
        assert!(v[0].hypot(v[1]) > 0.0);
    }
}
