//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::Rng;
use srs_search::comms::CommLevel;
use srs_search::obsgraph::SearchWeights;
use srs_search::planner::PlannerConfig;
use srs_search::sim::{
    episode_planner, AgentConfig, EpisodeConfig, OriginSpec, Termination, TerminationRule, World,
};
use srs_search::srs::SourceSet;
use srs_search::worldmap::{CellId, OccupancyGrid, Pose};

pub fn open(w: usize, h: usize) -> OccupancyGrid {
    OccupancyGrid::new(w, h, 1.0, [0.0, 0.0], vec![false; w * h]).unwrap()
}

/// Random occupancy with at least one free cell.
pub fn random_map(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> OccupancyGrid {
    loop {
        let occ: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(density)).collect();
        if occ.iter().any(|b| !b) {
            return OccupancyGrid::new(w, h, 1.0, [0.0, 0.0], occ).unwrap();
        }
    }
}

fn blocked_at(grid: &OccupancyGrid, x: f64, y: f64) -> bool {
    let (ix, iy) = (x.floor(), y.floor());
    if ix < 0.0 || iy < 0.0 || ix >= grid.width() as f64 || iy >= grid.height() as f64 {
        return true;
    }
    grid.is_blocked_cell(ix as usize, iy as usize)
}

/// Segment clearance by sampling every 0.1 cell, plus one sample inside each stretch between
/// consecutive grid-line crossings so short corner chords are not skipped. Samples landing
/// on a grid vertex (to within 1e-9) are ignored: grazing a corner does not block.
pub fn sampled_clear(grid: &OccupancyGrid, a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    let mut ts: Vec<f64> = Vec::new();
    let n = (len / 0.1).ceil() as usize;
    for k in 0..=n {
        ts.push(if n == 0 { 0.0 } else { k as f64 / n as f64 });
    }
    let mut crossings = vec![0.0, 1.0];
    for (start, delta) in [(a.0, dx), (a.1, dy)] {
        if delta != 0.0 {
            let (lo, hi) = if delta > 0.0 {
                (start, start + delta)
            } else {
                (start + delta, start)
            };
            let mut g = lo.floor() + 1.0;
            while g < hi {
                crossings.push((g - start) / delta);
                g += 1.0;
            }
        }
    }
    crossings.sort_by(f64::total_cmp);
    for w in crossings.windows(2) {
        ts.push(0.5 * (w[0] + w[1]));
    }
    ts.into_iter().all(|t| {
        let (x, y) = (a.0 + dx * t, a.1 + dy * t);
        if (x - x.round()).abs() < 1e-9 && (y - y.round()).abs() < 1e-9 {
            return true;
        }
        !blocked_at(grid, x, y)
    })
}

/// Visible set by exhaustive sampling, in grid units of a resolution-1 map.
pub fn oracle_visible(grid: &OccupancyGrid, p: &Pose, radius: f64) -> Vec<CellId> {
    let Some(own) = grid.cell_at(p) else {
        return vec![];
    };
    grid.free_cells()
        .filter(|&c| {
            if c == own {
                return true;
            }
            let q = grid.center(c);
            p.distance(&q) <= radius && sampled_clear(grid, (p.x, p.y), (q.x, q.y))
        })
        .collect()
}

pub struct DirectScores {
    pub o: Vec<f64>,
    pub i: Vec<f64>,
    pub s: Vec<f64>,
    pub r: Vec<f64>,
}

/// O, I, S and R written straight from their definitions over given visibility sets.
pub fn direct_scores(obs: &[Vec<CellId>], belief: &[f64], w: SearchWeights) -> DirectScores {
    let n = obs.len();
    let mut o = vec![0.0; n];
    for p in 0..n {
        for q in &obs[p] {
            o[p] += belief[q.0];
        }
    }
    let mut i = vec![0.0; n];
    for p in 0..n {
        let mut sum = 0.0;
        for q in &obs[p] {
            sum += o[q.0];
        }
        i[p] = if sum == 0.0 {
            0.0
        } else {
            obs[p].len() as f64 * o[p] / sum
        };
    }
    let max_o = o.iter().cloned().fold(0.0, f64::max);
    let max_i = i.iter().cloned().fold(0.0, f64::max);
    let mut s = vec![0.0; n];
    for p in 0..n {
        if max_o > 0.0 {
            s[p] += w.observability * o[p] / max_o;
        }
        if max_i > 0.0 {
            s[p] += w.isolation * i[p] / max_i;
        }
    }
    let max_s = s.iter().cloned().fold(0.0, f64::max);
    let r = s
        .iter()
        .map(|v| {
            if max_s > 0.0 {
                (v / max_s + 1.0).ln()
            } else {
                0.0
            }
        })
        .collect();
    DirectScores { o, i, s, r }
}

/// Cheapest selection cost over all endpoints on an 8-connected lattice of spacing `h`
/// anchored at `start`; an edge into `v` costs `(density(v) + λ)·length`.
pub fn dijkstra_selection_cost(
    grid: &OccupancyGrid,
    start: Pose,
    h: f64,
    lambda: f64,
    density: impl Fn(&Pose) -> f64,
    final_term: impl Fn(&Pose) -> f64,
) -> f64 {
    let (x0, y0, x1, y1) = grid.bounds();
    let i0 = -((start.x - x0) / h).floor() as i64;
    let j0 = -((start.y - y0) / h).floor() as i64;
    let i1 = ((x1 - start.x) / h).floor() as i64;
    let j1 = ((y1 - start.y) / h).floor() as i64;
    let (nw, nh) = ((i1 - i0 + 1) as usize, (j1 - j0 + 1) as usize);
    let pos = |k: usize| {
        let (i, j) = ((k % nw) as i64 + i0, (k / nw) as i64 + j0);
        Pose::new(start.x + i as f64 * h, start.y + j as f64 * h)
    };
    let free: Vec<bool> = (0..nw * nh).map(|k| grid.is_free(&pos(k))).collect();
    let mut dist = vec![f64::INFINITY; nw * nh];
    let s = ((-j0) as usize) * nw + (-i0) as usize;
    dist[s] = 0.0;
    let mut heap = BinaryHeap::from([Reverse((0f64.to_bits(), s))]);
    while let Some(Reverse((bits, k))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[k] {
            continue;
        }
        let (i, j) = ((k % nw) as i64, (k / nw) as i64);
        for (di, dj) in [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ] {
            let (a, b) = (i + di, j + dj);
            if a < 0 || b < 0 || a >= nw as i64 || b >= nh as i64 {
                continue;
            }
            let m = b as usize * nw + a as usize;
            if !free[m] || !grid.line_of_sight(&pos(k), &pos(m)) {
                continue;
            }
            let len = h * ((di * di + dj * dj) as f64).sqrt();
            let nd = d + (density(&pos(m)) + lambda) * len;
            if nd < dist[m] {
                dist[m] = nd;
                heap.push(Reverse((nd.to_bits(), m)));
            }
        }
    }
    (0..nw * nh)
        .filter(|&k| dist[k].is_finite())
        .map(|k| dist[k] + final_term(&pos(k)))
        .fold(f64::INFINITY, f64::min)
}

pub fn deterministic(max_nodes: usize, seed: u64) -> PlannerConfig {
    PlannerConfig {
        max_nodes,
        seed,
        time_budget_ms: None,
        ..PlannerConfig::default()
    }
}

pub fn empty_sources() -> SourceSet {
    SourceSet::default()
}

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data")).join(name)
}

pub fn brl_config() -> EpisodeConfig {
    EpisodeConfig::load(data_path("brl_like.json")).unwrap()
}

/// Single-origin config for small synthetic worlds.
pub fn small_config(robot: (f64, f64), human: (f64, f64)) -> EpisodeConfig {
    EpisodeConfig {
        map: "inline".into(),
        origins: [(
            "A".to_string(),
            OriginSpec {
                robot: Pose::new(robot.0, robot.1),
                human: Pose::new(human.0, human.1),
            },
        )]
        .into(),
        origin: "A".into(),
        robot: AgentConfig::robot(),
        human: AgentConfig::human(),
        dt: 0.1,
        replan_period: 2.0,
        termination: Termination {
            rule: TerminationRule::ExploredFraction,
            tau: 0.9,
            timeout: 300.0,
        },
        comm_level: CommLevel::L1,
        seed: 0,
        planner: PlannerConfig {
            max_nodes: 400,
            ..episode_planner()
        },
        planning_latency_ticks: 1,
        human_refresh: 1.0,
        search: SearchWeights::default(),
        comms: Default::default(),
        base_dir: Default::default(),
    }
}

pub fn world(grid: OccupancyGrid, radius: f64) -> Arc<World> {
    Arc::new(World::new(grid, radius, radius))
}
