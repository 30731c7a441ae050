mod common;

use common::{deterministic, open, random_map};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srs_search::obsgraph::{BeliefField, ObservabilityGraph, SearchScores, SearchWeights};
use srs_search::planner::{
    gen_cost, get_tree_origins, grow, plan, sel_cost, Forest, PlanError, PlannerConfig,
};
use srs_search::srs::{
    Nature, PolicySet, RewardSource, ShapeSpec, SourceKind, SourceModel, SourceSet,
};
use srs_search::worldmap::{OccupancyGrid, Pose};

fn gaussian(
    id: &str,
    kind: SourceKind,
    nature: Nature,
    policies: PolicySet,
    shape: ShapeSpec,
    a: f64,
    sigma: f64,
) -> RewardSource {
    RewardSource::new(
        id,
        kind,
        policies,
        nature,
        SourceModel::GaussianDecay {
            amplitude: a,
            sigma,
        },
        shape,
    )
}

fn mixed_sources(grid: &OccupancyGrid, rng: &mut ChaCha8Rng) -> SourceSet {
    let cells: Vec<_> = grid.free_cells().collect();
    let mut at = || grid.center(cells[rng.gen_range(0..cells.len())]);
    let (r, c, f) = (at(), at(), at());
    SourceSet::from_sources(
        1,
        vec![
            gaussian(
                "rep",
                SourceKind::Repulsive,
                Nature::Cumulative,
                PolicySet::BOTH,
                ShapeSpec::disk(r.x, r.y, 1.0),
                1.0,
                1.5,
            ),
            gaussian(
                "pass",
                SourceKind::Attractive,
                Nature::Consumable,
                PolicySet::BOTH,
                ShapeSpec::point(c.x, c.y),
                2.0,
                1.0,
            ),
            gaussian(
                "fin",
                SourceKind::Attractive,
                Nature::Final,
                PolicySet::BOTH,
                ShapeSpec::point(f.x, f.y),
                4.0,
                2.0,
            ),
        ],
    )
}

#[test]
fn stored_costs_never_increase() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = random_map(&mut rng, 16, 16, 0.15);
        let sources = mixed_sources(&grid, &mut rng);
        let robot = grid.center(grid.free_cells().next().unwrap());
        let config = PlannerConfig {
            lambda: 0.3,
            ..deterministic(400, seed)
        };
        let origins = get_tree_origins(&grid, &sources, robot, config.step_size, 0.0);
        let mut forest = Forest::new(&grid, &sources, &origins, &config, 0.0);
        let mut seen: Vec<f64> = Vec::new();
        let mut trees: Vec<u32> = Vec::new();
        let mut expand_rng = ChaCha8Rng::seed_from_u64(seed);
        while forest.len() < config.max_nodes {
            forest.expand(&mut expand_rng);
            for id in 0..forest.len() {
                let cost = forest.gen_cost(id as u32);
                let tree = forest.node(id as u32).tree;
                if id < seen.len() {
                    // A merge re-roots a branch, so monotonicity holds within one tree.
                    if trees[id] == tree {
                        assert!(
                            cost <= seen[id] + 1e-9,
                            "node {id} rose from {} to {cost}",
                            seen[id]
                        );
                    }
                    seen[id] = cost;
                    trees[id] = tree;
                } else {
                    seen.push(cost);
                    trees.push(tree);
                }
            }
        }
    }
}

#[test]
fn empty_registry_costs_are_lambda_length() {
    let grid = open(12, 12);
    let empty = SourceSet::default();
    let config = PlannerConfig {
        lambda: 0.7,
        ..deterministic(500, 4)
    };
    let forest = grow(&grid, &empty, Pose::new(6.5, 6.5), &config, 0.0).unwrap();
    for node in forest.nodes() {
        assert!((node.cum_cost - 0.7 * node.path_length).abs() < 1e-9);
    }
    let p = plan(&grid, &empty, Pose::new(6.5, 6.5), &config, 0.0).unwrap();
    assert_eq!(p.waypoints.len(), 1);
    assert_eq!(p.cost, 0.0);
}

#[test]
fn consumable_counts_once_and_final_is_local() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let c = Pose::new(rng.gen_range(2.0..8.0), rng.gen_range(2.0..8.0));
        let sources = SourceSet::from_sources(
            1,
            vec![
                gaussian(
                    "pass",
                    SourceKind::Attractive,
                    Nature::Consumable,
                    PolicySet::BOTH,
                    ShapeSpec::point(c.x, c.y),
                    2.0,
                    1.0,
                ),
                gaussian(
                    "avoid",
                    SourceKind::Repulsive,
                    Nature::Consumable,
                    PolicySet::BOTH,
                    ShapeSpec::point(c.y, c.x),
                    1.0,
                    1.0,
                ),
                gaussian(
                    "fin",
                    SourceKind::Attractive,
                    Nature::Final,
                    PolicySet::SELECTION,
                    ShapeSpec::point(5.0, 5.0),
                    3.0,
                    2.0,
                ),
            ],
        );
        let path: Vec<Pose> = (0..5)
            .map(|_| Pose::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)))
            .collect();
        let mut doubled = path.clone();
        doubled.insert(2, path[2]);
        for f in [gen_cost, sel_cost] {
            assert_eq!(
                f(&path, &sources, 1.0, 0.0).consumable,
                f(&doubled, &sources, 1.0, 0.0).consumable
            );
        }
        let mut padded = path.clone();
        padded.insert(
            3,
            Pose::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)),
        );
        assert_eq!(
            sel_cost(&path, &sources, 1.0, 0.0).final_term,
            sel_cost(&padded, &sources, 1.0, 0.0).final_term
        );
        assert_eq!(gen_cost(&path, &sources, 1.0, 0.0).final_term, 0.0);
    }
}

#[test]
fn endpoint_approaches_source_peak() {
    let grid = open(20, 20);
    let goal = Pose::new(15.5, 14.5);
    let sources = SourceSet::from_sources(
        1,
        vec![gaussian(
            "fin",
            SourceKind::Attractive,
            Nature::Final,
            PolicySet::SELECTION,
            ShapeSpec::point(goal.x, goal.y),
            10.0,
            3.0,
        )],
    );
    let mean_miss = |nodes: usize| {
        (0..20u64)
            .map(|seed| {
                let config = PlannerConfig {
                    lambda: 0.1,
                    ..deterministic(nodes, seed)
                };
                plan(&grid, &sources, Pose::new(2.5, 3.5), &config, 0.0)
                    .unwrap()
                    .endpoint()
                    .distance(&goal)
            })
            .sum::<f64>()
            / 20.0
    };
    let misses: Vec<f64> = [500, 2000, 8000].into_iter().map(mean_miss).collect();
    assert!(
        misses[0] >= misses[1] && misses[1] >= misses[2],
        "{misses:?}"
    );
}

#[test]
fn search_reward_endpoint_lands_in_peak_cell() {
    let grid = OccupancyGrid::from_rows(
        &[
            "..........",
            "..........",
            "....####..",
            "....#.....",
            "....#.....",
            "....#####.",
            "..........",
        ],
        1.0,
        [0.0, 0.0],
    )
    .unwrap();
    let graph = ObservabilityGraph::build(&grid, 3.0);
    let mut belief = BeliefField::uniform(grid.free_count());
    let start = Pose::new(0.5, 0.5);
    belief.mark_explored(&grid.visible_cells(&start, 3.0));
    let scores = SearchScores::compute(&graph, &belief, SearchWeights::default());
    let peak = scores.argmax().unwrap();
    let sources = SourceSet::from_sources(1, vec![scores.as_source(&grid)]);
    let config = PlannerConfig {
        lambda: 0.001,
        ..deterministic(3000, 2)
    };
    let p = plan(&grid, &sources, start, &config, 0.0).unwrap();
    assert_eq!(grid.cell_at(&p.endpoint()), Some(peak));
}

#[test]
fn plans_are_reproducible_and_well_formed() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let grid = random_map(&mut rng, 18, 18, 0.2);
    let sources = mixed_sources(&grid, &mut rng);
    let robot = grid.center(grid.free_cells().nth(3).unwrap());
    let config = PlannerConfig {
        lambda: 0.2,
        ..deterministic(1200, 5)
    };
    let a = plan(&grid, &sources, robot, &config, 0.0).unwrap();
    let b = plan(&grid, &sources, robot, &config, 0.0).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(a.waypoints[0], Pose::new(robot.x, robot.y));
    for w in a.waypoints.windows(2) {
        assert!(grid.line_of_sight(&w[0], &w[1]));
    }
    let b = a.breakdown;
    assert!((a.cost - (b.cumulative + b.consumable + b.final_term)).abs() < 1e-12);
    assert!((sel_cost(&a.waypoints, &sources, 0.2, 0.0).total() - a.cost).abs() < 1e-9);
}

#[test]
fn trees_one_step_apart_merge() {
    let grid = open(10, 10);
    let sources = SourceSet::from_sources(
        1,
        vec![gaussian(
            "fin",
            SourceKind::Attractive,
            Nature::Final,
            PolicySet::BOTH,
            ShapeSpec::point(6.8, 5.5),
            1.0,
            1.0,
        )],
    );
    let config = deterministic(60, 1);
    let forest = grow(&grid, &sources, Pose::new(5.5, 5.5), &config, 0.0).unwrap();
    assert_eq!(forest.roots().len(), 2);
    assert_eq!(forest.active_trees(), vec![0]);
    assert!(forest.nodes().iter().all(|n| n.tree == 0));
    assert!(forest.consistency_error() < 1e-9);
}

#[test]
fn rewire_takes_the_shorter_route() {
    let grid = open(10, 10);
    let empty = SourceSet::default();
    let config = PlannerConfig {
        step_size: 2.0,
        neighbor_radius: 3.0,
        ..deterministic(10, 0)
    };
    let root = Pose::new(1.0, 1.0);
    let mut forest = Forest::new(&grid, &empty, &[root], &config, 0.0);
    // A detour node, then a node beside the root that should become its better parent.
    assert!(forest.expand_toward(Pose::new(3.0, 1.0)));
    assert!(forest.expand_toward(Pose::new(3.0, 3.0)));
    let far = forest.len() as u32 - 1;
    let before = forest.node(far).cum_cost;
    assert!(forest.expand_toward(Pose::new(2.0, 2.0)));
    let after = forest.node(far).cum_cost;
    assert!(after <= before);
    assert!((after - forest.node(far).path_length).abs() < 1e-12);
    assert!(forest.consistency_error() < 1e-12);
}

#[test]
fn blocked_start_and_bad_config() {
    let grid = OccupancyGrid::from_rows(&["#."], 1.0, [0.0, 0.0]).unwrap();
    let err = plan(
        &grid,
        &SourceSet::default(),
        Pose::new(0.5, 0.5),
        &deterministic(10, 0),
        0.0,
    )
    .unwrap_err();
    assert!(matches!(err, PlanError::BlockedStart { .. }));
    let bad = PlannerConfig {
        step_size: 0.0,
        ..deterministic(10, 0)
    };
    assert!(matches!(
        plan(&grid, &SourceSet::default(), Pose::new(1.5, 0.5), &bad, 0.0),
        Err(PlanError::InvalidConfig(_))
    ));
}

#[test]
fn zero_time_budget_plans_over_origins() {
    let grid = open(8, 8);
    let config = PlannerConfig {
        time_budget_ms: Some(0),
        max_nodes: 500,
        ..PlannerConfig::default()
    };
    let p = plan(
        &grid,
        &SourceSet::default(),
        Pose::new(2.5, 2.5),
        &config,
        0.0,
    )
    .unwrap();
    assert_eq!(p.forest_size, 1);
    assert_eq!(p.waypoints, vec![Pose::new(2.5, 2.5)]);
}
