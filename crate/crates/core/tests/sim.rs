mod common;

use common::{direct_scores, open, oracle_visible, small_config, world};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srs_search::comms::{CommLevel, Instruction, InstructionKind};
use srs_search::metrics::{Agent, LogRecord};
use srs_search::obsgraph::{BeliefField, ObservabilityGraph, SearchWeights};
use srs_search::sim::{
    grid_distances, infer_human, place_object, run_episode, slide, AgentState, Episode, HumanMode,
    ScriptedHuman, Setup, Status,
};
use srs_search::worldmap::{CellId, OccupancyGrid, Pose};

fn office() -> OccupancyGrid {
    let rows = [
        "....................",
        "....................",
        "......#######.......",
        "......#.............",
        "......#.............",
        "......#....#####....",
        "...........#........",
        "...........#........",
        "####..######........",
        "....................",
        "....................",
        "........#...........",
        "........#.....####..",
        "........#...........",
        "........#...........",
        "..............#.....",
        "..............#.....",
        "....................",
        "....................",
        "....................",
    ];
    OccupancyGrid::from_rows(&rows, 1.0, [0.0, 0.0]).unwrap()
}

fn random_instruction(rng: &mut ChaCha8Rng, grid: &OccupancyGrid, t: f64) -> (Instruction, bool) {
    let kinds = [
        InstructionKind::GoTo,
        InstructionKind::PassThrough,
        InstructionKind::Avoid,
        InstructionKind::ImGoingTo,
        InstructionKind::BeenHere,
    ];
    let (x0, y0, x1, y1) = grid.bounds();
    let instruction = Instruction {
        kind: kinds[rng.gen_range(0..kinds.len())],
        center: [rng.gen_range(x0..x1), rng.gen_range(y0..y1)],
        radius: rng.gen_range(0.5..3.0),
        issued_at: t,
    };
    (instruction, rng.gen_bool(0.15))
}

/// Runs an external-human L3 episode under random commands and instructions.
fn scripted_l3(seed: u64, ticks: u64) -> (Episode, Vec<String>) {
    let grid = office();
    let mut config = small_config((1.5, 1.5), (18.5, 18.5));
    config.comm_level = CommLevel::L3;
    config.seed = seed;
    config.termination.timeout = 1000.0;
    let mut episode = Episode::new(
        world(grid.clone(), 4.0),
        &config,
        Setup::Collab(CommLevel::L3),
        HumanMode::External,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let mut last_true = 0;
    let mut last_perceived = 0;
    for _ in 0..ticks {
        if rng.gen_bool(0.1) {
            let v = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            episode.set_human_command(v);
        }
        if rng.gen_bool(0.03) {
            let (instruction, clear) = random_instruction(&mut rng, &grid, episode.clock());
            let _ = episode.instruct(instruction, clear);
        }
        let (robot, human) = (episode.robot().pose, episode.human().pose);
        let found_before = found_count(&episode);
        if episode.tick() != Status::Running {
            break;
        }
        let dt = episode.config().dt;
        let r = episode.robot();
        if r.pose.distance(&robot) > r.max_speed * dt + 1e-9 {
            violations.push(format!(
                "robot moved {} at t={}",
                r.pose.distance(&robot),
                episode.clock()
            ));
        }
        let h = episode.human();
        if h.pose.distance(&human) > h.max_speed * dt + 1e-9 {
            violations.push(format!(
                "human moved {} at t={}",
                h.pose.distance(&human),
                episode.clock()
            ));
        }
        let truth = episode.true_explored();
        let knowledge = episode.knowledge();
        if truth.len() < last_true || knowledge.perceived.len() < last_perceived {
            violations.push(format!("mask shrank at t={}", episode.clock()));
        }
        last_true = truth.len();
        last_perceived = knowledge.perceived.len();
        for c in knowledge.perceived.order() {
            if !truth.contains(*c) && !knowledge.comms_marked.contains(*c) {
                violations.push(format!("perceived {c:?} without evidence"));
            }
        }
        if found_count(&episode) > found_before {
            let Some(LogRecord::Found(f)) = episode
                .events()
                .iter()
                .rev()
                .find(|e| matches!(e, LogRecord::Found(_)))
            else {
                unreachable!()
            };
            let (robot_seen, human_seen) = episode.last_visible();
            let seen = match f.by {
                Agent::Robot => robot_seen,
                Agent::Human => human_seen,
            };
            if !seen.contains(&episode.object()) {
                violations.push("found without seeing the object".into());
            }
        }
    }
    (episode, violations)
}

fn found_count(episode: &Episode) -> usize {
    episode
        .events()
        .iter()
        .filter(|e| matches!(e, LogRecord::Found(_)))
        .count()
}

#[test]
fn l3_episode_keeps_its_invariants() {
    for seed in 0..3u64 {
        let (episode, violations) = scripted_l3(seed, 600);
        assert!(violations.is_empty(), "seed {seed}: {violations:?}");
        assert!(episode.log().validate().is_ok());
        assert!(!episode.true_explored().is_empty());
    }
}

#[test]
fn l3_episode_is_deterministic() {
    let (a, _) = scripted_l3(11, 400);
    let (b, _) = scripted_l3(11, 400);
    assert_eq!(a.log().to_text(), b.log().to_text());
}

#[test]
fn object_placement_is_uniform() {
    let grid = open(10, 1);
    let mut counts = [0usize; 10];
    for seed in 0..10_000u64 {
        counts[place_object(&grid, seed).0] += 1;
    }
    for (cell, n) in counts.iter().enumerate() {
        let f = *n as f64 / 10_000.0;
        assert!((f - 0.1).abs() <= 0.02, "cell {cell}: {f}");
    }
}

fn agent(x: f64, y: f64, radius: f64) -> AgentState {
    AgentState {
        pose: Pose::new(x, y),
        max_speed: 1.0,
        sense_radius: radius,
        velocity: [0.0, 0.0],
    }
}

#[test]
fn robot_credits_the_human_only_in_view() {
    let grid = OccupancyGrid::from_rows(&["......", "...#..", "...#..", "......"], 1.0, [0.0, 0.0])
        .unwrap();
    let cells = vec![CellId(0), CellId(1)];
    let robot = agent(2.5, 1.5, 3.0);
    assert_eq!(
        infer_human(&grid, &robot, &Pose::new(1.5, 1.5), &cells),
        &cells[..]
    );
    assert!(infer_human(&grid, &robot, &Pose::new(4.5, 1.5), &cells).is_empty());
    let rim = agent(0.5, 0.5, 3.0);
    assert_eq!(
        infer_human(&grid, &rim, &Pose::new(0.5, 3.5), &cells),
        &cells[..]
    );
    assert!(infer_human(&grid, &rim, &Pose::new(0.5, 3.5 + 1e-9), &cells).is_empty());
}

/// Drives a scripted human with nothing but its own commands.
fn walk(
    grid: &OccupancyGrid,
    graph: &ObservabilityGraph,
    human: &mut ScriptedHuman,
    mut pose: Pose,
    ticks: usize,
) -> Vec<Pose> {
    let mut poses = vec![pose];
    for k in 0..ticks {
        let v = human.command(grid, graph, pose, 1.0, 0.1, k as f64 * 0.1);
        pose = slide(grid, pose, v, 0.1);
        poses.push(pose);
    }
    poses
}

#[test]
fn scripted_human_closes_on_a_single_pocket() {
    let grid = OccupancyGrid::from_rows(
        &[
            "..........",
            "..........",
            "..........",
            "######.###",
            "..........",
            "..........",
        ],
        1.0,
        [0.0, 0.0],
    )
    .unwrap();
    let graph = ObservabilityGraph::build(&grid, 2.0);
    let mut human = ScriptedHuman::new(grid.free_count(), 1.0, SearchWeights::default());
    let explored: Vec<CellId> = grid
        .free_cells()
        .filter(|c| grid.center(*c).y > 3.0)
        .collect();
    human.observe(&explored);
    let poses = walk(&grid, &graph, &mut human, Pose::new(1.5, 5.5), 1);
    let target = human.target().unwrap();
    assert!(grid.center(target).y < 3.0);
    let dist = grid_distances(&grid, target);
    let poses = walk(&grid, &graph, &mut human, *poses.last().unwrap(), 200);
    let mut last = f64::INFINITY;
    for p in &poses {
        if human.target() != Some(target) {
            break;
        }
        let d = dist[grid.cell_at(p).unwrap().0];
        assert!(d <= last + 1e-12, "distance rose from {last} to {d}");
        last = d;
    }
    assert!(last < dist[grid.cell_at(&Pose::new(1.5, 5.5)).unwrap().0]);
}

#[test]
fn scripted_human_targets_the_best_pocket() {
    let grid = OccupancyGrid::from_rows(
        &[
            ".....#......",
            ".....#......",
            "............",
            ".....#......",
            ".....#......",
        ],
        1.0,
        [0.0, 0.0],
    )
    .unwrap();
    let radius = 2.0;
    let graph = ObservabilityGraph::build(&grid, radius);
    let obs: Vec<Vec<CellId>> = grid
        .free_cells()
        .map(|c| oracle_visible(&grid, &grid.center(c), radius))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        // Leave two pockets of random size unexplored.
        let left = rng.gen_range(1.0..5.0);
        let right = rng.gen_range(7.0..11.0);
        let explored: Vec<CellId> = grid
            .free_cells()
            .filter(|c| grid.center(*c).x > left && grid.center(*c).x < right)
            .collect();
        let mut human = ScriptedHuman::new(grid.free_count(), 1.0, SearchWeights::default());
        human.observe(&explored);
        human.command(&grid, &graph, Pose::new(5.5, 2.5), 1.0, 0.1, 0.0);
        let mut belief = BeliefField::uniform(grid.free_count());
        belief.mark_explored(&explored);
        let direct = direct_scores(&obs, belief.mass(), SearchWeights::default());
        let best = direct.r.iter().copied().fold(0.0, f64::max);
        let target = human.target().unwrap();
        assert!(
            (direct.r[target.0] - best).abs() < 1e-12,
            "target R {} vs max {best}",
            direct.r[target.0]
        );
    }
}

#[test]
fn explored_map_stops_the_human() {
    let grid = open(6, 6);
    let graph = ObservabilityGraph::build(&grid, 3.0);
    let mut human = ScriptedHuman::new(grid.free_count(), 1.0, SearchWeights::default());
    human.observe(&grid.free_cells().collect::<Vec<_>>());
    for k in 0..5 {
        assert_eq!(
            human.command(&grid, &graph, Pose::new(2.3, 4.1), 1.0, 0.1, k as f64),
            [0.0, 0.0]
        );
    }
    assert_eq!(human.target(), None);
}

#[test]
fn baselines_reach_the_explored_threshold() {
    let grid = office();
    for setup in [Setup::RobotOnly, Setup::HumanOnly] {
        let config = small_config((1.5, 1.5), (18.5, 18.5));
        let log = run_episode(world(grid.clone(), 4.0), &config, setup).unwrap();
        let end = log.termination().unwrap();
        assert_eq!(end.status, "explored", "{setup:?}");
        assert!(end.explored >= 0.9);
        assert!(end.t < config.termination.timeout);
        let movers: Vec<bool> = log
            .ticks()
            .map(|t| match setup {
                Setup::RobotOnly => !t.human_new.is_empty() && t.t > 0.1,
                _ => !t.robot_new.is_empty() && t.t > 0.1,
            })
            .collect();
        assert!(
            movers.iter().all(|m| !m),
            "{setup:?}: the idle agent discovered cells after the first tick"
        );
    }
}
