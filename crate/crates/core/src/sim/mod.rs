//! Two-agent search episodes on a known map.
//!
//! Both agents sense every visible cell within their radius. The robot only knows what it saw
//! itself, plus what the human saw while the human was in its view, and it plans on the
//! search reward of that perceived map. Ticks are fixed-step; plans are computed off-thread and
//! installed a fixed number of ticks after the request so runs replay exactly.

mod config;
mod human;

use std::sync::Arc;
use std::thread::{self, JoinHandle};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    episode_planner, AgentConfig, EpisodeConfig, OriginSpec, Setup, Termination, TerminationRule,
};
pub use human::{grid_distances, neighbors, ScriptedHuman};

use crate::comms::{
    visible_state, ApplyReport, CommLevel, CommsError, CommsState, HumanView, Instruction,
    Knowledge,
};
use crate::metrics::{
    Agent, EpisodeLog, FoundRecord, InstructionRecord, LogHeader, LogRecord, PlanRecord,
    TerminationRecord, TickRecord, SCHEMA_VERSION,
};
use crate::obsgraph::{ObservabilityGraph, ScoreCache};
use crate::planner::{plan, Plan, PlanError};
use crate::worldmap::{CellId, CellMask, MapError, OccupancyGrid, Pose};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("unknown origin {0:?}")]
    UnknownOrigin(String),
    #[error("unknown setup {0:?} (expected robot-only, human-only or collab-L1..collab-L3)")]
    UnknownSetup(String),
    #[error("{agent} start ({x:.2}, {y:.2}) is not free")]
    BlockedStart { agent: &'static str, x: f64, y: f64 },
    #[error("instructions require L3")]
    InstructionsRequireL3,
    #[error("episode has ended")]
    NotRunning,
    #[error(transparent)]
    Comms(#[from] CommsError),
}

/// Static data shared by every episode on one map.
#[derive(Debug)]
pub struct World {
    pub grid: Arc<OccupancyGrid>,
    pub robot_graph: Arc<ObservabilityGraph>,
    pub human_graph: Arc<ObservabilityGraph>,
}

impl World {
    pub fn new(grid: OccupancyGrid, robot_radius: f64, human_radius: f64) -> Self {
        let robot_graph = Arc::new(ObservabilityGraph::build(&grid, robot_radius));
        let human_graph = if human_radius == robot_radius {
            robot_graph.clone()
        } else {
            Arc::new(ObservabilityGraph::build(&grid, human_radius))
        };
        Self {
            grid: Arc::new(grid),
            robot_graph,
            human_graph,
        }
    }

    pub fn load(config: &EpisodeConfig) -> Result<Self, SimError> {
        let grid = OccupancyGrid::load(config.map_path())?;
        Ok(Self::new(
            grid,
            config.robot.sense_radius,
            config.human.sense_radius,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    FoundByRobot,
    FoundByHuman,
    Explored,
    Timeout,
    Aborted,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::FoundByRobot => "found_by_robot",
            Status::FoundByHuman => "found_by_human",
            Status::Explored => "explored",
            Status::Timeout => "timeout",
            Status::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentState {
    pub pose: Pose,
    pub max_speed: f64,
    pub sense_radius: f64,
    pub velocity: [f64; 2],
}

impl AgentState {
    fn new(pose: Pose, config: AgentConfig) -> Self {
        Self {
            pose,
            max_speed: config.max_speed,
            sense_radius: config.sense_radius,
            velocity: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HumanMode {
    /// Velocity commands come from outside (a client or a recorded trace).
    External,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum TraceAction {
    Command {
        vx: f64,
        vy: f64,
    },
    Instruction {
        instruction: Instruction,
        clear: bool,
    },
}

/// Something an external driver did just before tick `tick + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub tick: u64,
    #[serde(flatten)]
    pub action: TraceAction,
}

/// Caps a velocity at `max_speed`, keeping its direction.
pub fn clamp_velocity(v: [f64; 2], max_speed: f64) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if !n.is_finite() {
        return [0.0, 0.0];
    }
    if n <= max_speed {
        v
    } else {
        [v[0] / n * max_speed, v[1] / n * max_speed]
    }
}

/// Moves by `v·dt`, dropping whichever axis would end in a blocked cell.
pub fn slide(grid: &OccupancyGrid, pose: Pose, v: [f64; 2], dt: f64) -> Pose {
    let (dx, dy) = (v[0] * dt, v[1] * dt);
    let full = Pose::with_heading(pose.x + dx, pose.y + dy, pose.heading);
    if grid.is_free(&full) {
        return full;
    }
    let x = if grid.is_free_point(pose.x + dx, pose.y) {
        pose.x + dx
    } else {
        pose.x
    };
    let y = if grid.is_free_point(x, pose.y + dy) {
        pose.y + dy
    } else {
        pose.y
    };
    Pose::with_heading(x, y, pose.heading)
}

/// Advances along `waypoints` from index `next` by at most `budget` meters.
pub fn follow(pose: Pose, waypoints: &[Pose], mut next: usize, mut budget: f64) -> (Pose, usize) {
    let mut at = pose;
    while budget > 0.0 && next < waypoints.len() {
        let target = waypoints[next];
        let d = at.distance(&target);
        if d <= budget + 1e-9 {
            at = Pose::with_heading(target.x, target.y, at.heading);
            budget -= d;
            next += 1;
        } else {
            let f = budget / d;
            at = Pose::with_heading(
                at.x + (target.x - at.x) * f,
                at.y + (target.y - at.y) * f,
                at.heading,
            );
            budget = 0.0;
        }
    }
    if at.distance(&pose) > 0.0 {
        at.heading = (at.y - pose.y).atan2(at.x - pose.x);
    }
    (at, next)
}

/// Whether the robot can see the human: clear line of sight within its sensing radius.
pub fn human_in_view(grid: &OccupancyGrid, robot: &AgentState, human: &Pose) -> bool {
    robot.pose.distance(human) <= robot.sense_radius && grid.line_of_sight(&robot.pose, human)
}

/// Cells the robot credits to the human this tick.
pub fn infer_human<'a>(
    grid: &OccupancyGrid,
    robot: &AgentState,
    human: &Pose,
    human_visible: &'a [CellId],
) -> &'a [CellId] {
    if human_in_view(grid, robot, human) {
        human_visible
    } else {
        &[]
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Planner seed for the `k`-th request of an episode.
pub fn plan_seed(planner_seed: u64, episode_seed: u64, k: u64) -> u64 {
    splitmix(splitmix(splitmix(planner_seed) ^ episode_seed) ^ k)
}

/// Object cell for a seed, uniform over free cells.
pub fn place_object(grid: &OccupancyGrid, seed: u64) -> CellId {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CellId(rng.gen_range(0..grid.free_count()))
}

enum PlanJob {
    Running(JoinHandle<Result<Plan, PlanError>>),
    Ready(Result<Plan, PlanError>),
}

struct Pending {
    ready_tick: u64,
    requested_at: f64,
    job: PlanJob,
}

pub struct Episode {
    world: Arc<World>,
    config: EpisodeConfig,
    setup: Setup,
    mode: HumanMode,
    tick: u64,
    clock: f64,
    robot: AgentState,
    human: AgentState,
    robot_anchor: Pose,
    true_explored: CellMask,
    knowledge: Knowledge,
    comms: CommsState,
    object: CellId,
    status: Status,
    found: Option<Agent>,
    plan: Option<Arc<Plan>>,
    next_waypoint: usize,
    pending: Option<Pending>,
    last_request: Option<f64>,
    planned_revision: u64,
    planned_instructions: u64,
    instructions: u64,
    requests: u64,
    scores: ScoreCache,
    scripted: ScriptedHuman,
    human_command: [f64; 2],
    visible: [Vec<CellId>; 2],
    header: LogHeader,
    events: Vec<LogRecord>,
}

impl Episode {
    /// Sets up agents, places the object and applies the initial sensing.
    pub fn new(
        world: Arc<World>,
        config: &EpisodeConfig,
        setup: Setup,
        mode: HumanMode,
    ) -> Result<Self, SimError> {
        config.validate()?;
        let grid = world.grid.clone();
        let origin = config.origin_spec()?;
        for (agent, p) in [("robot", origin.robot), ("human", origin.human)] {
            if !grid.is_free(&p) {
                return Err(SimError::BlockedStart {
                    agent,
                    x: p.x,
                    y: p.y,
                });
            }
        }
        if grid.free_count() == 0 {
            return Err(SimError::Map(MapError::NoFreeCells));
        }
        let (robot_cfg, human_cfg) = setup.apply(config);
        let robot = AgentState::new(origin.robot, robot_cfg);
        let human = AgentState::new(origin.human, human_cfg);
        let cells = grid.free_count();
        let object = place_object(&grid, config.seed);

        let robot_seen = grid.visible_cells(&robot.pose, robot.sense_radius);
        let human_seen = grid.visible_cells(&human.pose, human.sense_radius);
        let mut true_explored = CellMask::new(cells);
        for c in robot_seen.iter().chain(&human_seen) {
            true_explored.insert(*c);
        }
        let mut knowledge = Knowledge::new(cells);
        knowledge.perceive(&robot_seen);
        knowledge.perceive(infer_human(&grid, &robot, &human.pose, &human_seen));
        let mut scripted = ScriptedHuman::new(cells, config.human_refresh, config.search);
        scripted.observe(true_explored.order());

        let header = LogHeader {
            schema: SCHEMA_VERSION,
            build: concat!("srs-search ", env!("CARGO_PKG_VERSION")).to_string(),
            setup: setup.to_string(),
            origin: config.origin.clone(),
            seed: config.seed,
            dt: config.dt,
            free_cells: cells,
            object: object.0,
            initial_robot: robot_seen.iter().map(|c| c.0).collect(),
            initial_human: human_seen.iter().map(|c| c.0).collect(),
            config: serde_json::to_value(config).expect("config serializes"),
        };
        let mut episode = Self {
            robot_anchor: robot.pose,
            world,
            config: config.clone(),
            setup,
            mode,
            tick: 0,
            clock: 0.0,
            robot,
            human,
            true_explored,
            knowledge,
            comms: CommsState::new(),
            object,
            status: Status::Running,
            found: None,
            plan: None,
            next_waypoint: 0,
            pending: None,
            last_request: None,
            planned_revision: 0,
            planned_instructions: 0,
            instructions: 0,
            requests: 0,
            scores: ScoreCache::default(),
            scripted,
            human_command: [0.0, 0.0],
            visible: [robot_seen, human_seen],
            header,
            events: Vec::new(),
        };
        episode.check_found();
        episode.check_end();
        if episode.status == Status::Running && episode.robot.max_speed > 0.0 {
            episode.request_plan();
        }
        Ok(episode)
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn setup(&self) -> Setup {
        self.setup
    }

    pub fn level(&self) -> CommLevel {
        self.setup.level()
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn robot(&self) -> &AgentState {
        &self.robot
    }

    pub fn human(&self) -> &AgentState {
        &self.human
    }

    pub fn object(&self) -> CellId {
        self.object
    }

    pub fn true_explored(&self) -> &CellMask {
        &self.true_explored
    }

    pub fn knowledge(&self) -> &Knowledge {
        &self.knowledge
    }

    pub fn comms(&self) -> &CommsState {
        &self.comms
    }

    pub fn plan(&self) -> Option<&Plan> {
        self.plan.as_deref()
    }

    pub fn plans_requested(&self) -> u64 {
        self.requests
    }

    pub fn scripted_human(&self) -> &ScriptedHuman {
        &self.scripted
    }

    /// Cells each agent saw on the last tick: robot, then human.
    pub fn last_visible(&self) -> (&[CellId], &[CellId]) {
        (&self.visible[0], &self.visible[1])
    }

    pub fn explored_fraction(&self) -> f64 {
        self.true_explored.fraction()
    }

    pub fn events(&self) -> &[LogRecord] {
        &self.events
    }

    /// Velocity held for the human until the next command.
    pub fn set_human_command(&mut self, v: [f64; 2]) {
        self.human_command = v;
    }

    pub fn view(&self) -> HumanView {
        visible_state(
            self.level(),
            self.clock,
            self.robot.pose,
            self.human.pose,
            &self.true_explored,
            &self.knowledge,
            self.plan.as_deref(),
            &self.comms,
        )
    }

    /// Applies an instruction, or clears all instructions of its kind, between ticks.
    pub fn instruct(
        &mut self,
        instruction: Instruction,
        clear: bool,
    ) -> Result<ApplyReport, SimError> {
        if !self.level().accepts_instructions() {
            return Err(SimError::InstructionsRequireL3);
        }
        if self.status != Status::Running {
            return Err(SimError::NotRunning);
        }
        let mut instruction = instruction;
        instruction.issued_at = self.clock;
        let result = if clear {
            Ok(self.comms.clear(instruction.kind, &mut self.knowledge))
        } else {
            self.comms
                .apply(
                    &instruction,
                    &self.world.grid,
                    &mut self.knowledge,
                    &self.config.comms,
                )
                .map_err(SimError::from)
        };
        let (applied, error) = match &result {
            Ok(report) => (report.applied, None),
            Err(e) => (false, Some(e.to_string())),
        };
        if applied {
            self.instructions += 1;
        }
        self.events.push(LogRecord::Instruction(InstructionRecord {
            t: self.clock,
            kind: instruction.kind,
            center: instruction.center,
            radius: instruction.radius,
            clear,
            applied,
            revision: self.comms.registry.revision(),
            error,
        }));
        result
    }

    /// One fixed step.
    pub fn tick(&mut self) -> Status {
        if self.status != Status::Running {
            return self.status;
        }
        let grid = self.world.grid.clone();
        let dt = self.config.dt;
        self.tick += 1;
        self.clock = self.tick as f64 * dt;

        self.land_plan();

        let command = match self.mode {
            HumanMode::External => self.human_command,
            HumanMode::Scripted => self.scripted.command(
                &grid,
                &self.world.human_graph,
                self.human.pose,
                self.human.max_speed,
                dt,
                self.clock,
            ),
        };
        self.human.velocity = clamp_velocity(command, self.human.max_speed);
        self.human.pose = slide(&grid, self.human.pose, self.human.velocity, dt);

        if let Some(plan) = self.plan.clone() {
            let before = self.robot.pose;
            let (pose, next) = follow(
                before,
                &plan.waypoints,
                self.next_waypoint,
                self.robot.max_speed * dt,
            );
            self.robot.pose = pose;
            self.next_waypoint = next;
            self.robot.velocity = [(pose.x - before.x) / dt, (pose.y - before.y) / dt];
        } else {
            self.robot.velocity = [0.0, 0.0];
        }
        if grid.is_free(&self.robot.pose) {
            self.robot_anchor = self.robot.pose;
        }

        let robot_seen = grid.visible_cells(&self.robot.pose, self.robot.sense_radius);
        let human_seen = grid.visible_cells(&self.human.pose, self.human.sense_radius);
        let robot_new: Vec<usize> = robot_seen
            .iter()
            .filter(|c| !self.true_explored.contains(**c))
            .map(|c| c.0)
            .collect();
        let human_new: Vec<usize> = human_seen
            .iter()
            .filter(|c| !self.true_explored.contains(**c))
            .map(|c| c.0)
            .collect();
        let mut fresh = Vec::new();
        for c in robot_seen.iter().chain(&human_seen) {
            if self.true_explored.insert(*c) {
                fresh.push(*c);
            }
        }
        self.scripted.observe(&fresh);
        self.knowledge.perceive(&robot_seen);
        let inferred = infer_human(&grid, &self.robot, &self.human.pose, &human_seen);
        self.knowledge.perceive(inferred);
        self.visible = [robot_seen, human_seen];

        self.check_found();

        self.comms.registry.step_dynamics(dt, self.clock);
        if self.knowledge.expire_claims(self.clock) {
            self.instructions += 1;
        }
        self.comms.prune(&self.knowledge);

        self.events.push(LogRecord::Tick(TickRecord {
            t: self.clock,
            robot: [self.robot.pose.x, self.robot.pose.y],
            human: [self.human.pose.x, self.human.pose.y],
            robot_new,
            human_new,
            perceived: self.knowledge.perceived.len(),
        }));
        self.check_end();
        if self.status == Status::Running && self.replan_due() {
            self.request_plan();
        }
        self.status
    }

    fn check_found(&mut self) {
        if self.found.is_some() {
            return;
        }
        let by = if self.visible[0].binary_search(&self.object).is_ok() {
            Agent::Robot
        } else if self.visible[1].binary_search(&self.object).is_ok() {
            Agent::Human
        } else {
            return;
        };
        self.found = Some(by);
        self.events
            .push(LogRecord::Found(FoundRecord { t: self.clock, by }));
        if self.config.termination.rule == TerminationRule::FindObject {
            self.status = match by {
                Agent::Robot => Status::FoundByRobot,
                Agent::Human => Status::FoundByHuman,
            };
        }
    }

    fn check_end(&mut self) {
        let term = self.config.termination;
        if self.status == Status::Running
            && term.rule == TerminationRule::ExploredFraction
            && self.true_explored.fraction() >= term.tau - 1e-12
        {
            self.status = Status::Explored;
        }
        if self.status == Status::Running && self.clock >= term.timeout - 1e-9 {
            self.status = Status::Timeout;
        }
        if self.status != Status::Running {
            self.close(self.status);
        }
    }

    fn close(&mut self, status: Status) {
        self.status = status;
        if let Some(p) = self.pending.take() {
            if let PlanJob::Running(handle) = p.job {
                let _ = handle.join();
            }
        }
        self.events.push(LogRecord::Termination(TerminationRecord {
            t: self.clock,
            status: status.as_str().to_string(),
            explored: self.true_explored.fraction(),
        }));
    }

    fn replan_due(&self) -> bool {
        if self.robot.max_speed <= 0.0 || self.pending.is_some() {
            return false;
        }
        let Some(last) = self.last_request else {
            return true;
        };
        let exhausted = self
            .plan
            .as_ref()
            .is_some_and(|p| p.waypoints.len() > 1 && self.next_waypoint >= p.waypoints.len());
        self.clock - last >= self.config.replan_period - 1e-9
            || self.comms.registry.revision() != self.planned_revision
            || self.instructions != self.planned_instructions
            || exhausted
    }

    fn request_plan(&mut self) {
        let world = self.world.clone();
        let scores = self.scores.get(
            &world.robot_graph,
            &self.knowledge.belief,
            0,
            self.config.search,
        );
        let sources = self
            .comms
            .registry
            .snapshot()
            .with_source(scores.as_source(&world.grid));
        let mut planner = self.config.planner.clone();
        planner.seed = plan_seed(planner.seed, self.config.seed, self.requests);
        let start = self.robot_anchor;
        let t = self.clock;
        self.requests += 1;
        self.last_request = Some(t);
        self.planned_revision = self.comms.registry.revision();
        self.planned_instructions = self.instructions;
        let latency = self.config.planning_latency_ticks;
        let job = if latency == 0 {
            PlanJob::Ready(plan(&world.grid, &sources, start, &planner, t))
        } else {
            let grid = world.grid.clone();
            PlanJob::Running(thread::spawn(move || {
                plan(&grid, &sources, start, &planner, t)
            }))
        };
        self.pending = Some(Pending {
            ready_tick: self.tick + latency,
            requested_at: t,
            job,
        });
        if latency == 0 {
            self.land_plan();
        }
    }

    fn land_plan(&mut self) {
        if !self
            .pending
            .as_ref()
            .is_some_and(|p| p.ready_tick <= self.tick)
        {
            return;
        }
        let pending = self.pending.take().expect("checked above");
        let result = match pending.job {
            PlanJob::Ready(r) => r,
            PlanJob::Running(handle) => handle.join().unwrap_or(Err(PlanError::EmptyForest)),
        };
        if let Ok(plan) = result {
            self.events.push(LogRecord::Plan(PlanRecord::new(
                self.clock,
                pending.requested_at,
                &plan,
            )));
            self.plan = Some(Arc::new(plan));
            // The first waypoint is where the robot stood at request time.
            self.next_waypoint = 1;
        }
    }

    /// Log so far, closed with an `aborted` record if the episode is still running.
    pub fn log(&self) -> EpisodeLog {
        let mut events = self.events.clone();
        if self.status == Status::Running {
            events.push(LogRecord::Termination(TerminationRecord {
                t: self.clock,
                status: Status::Aborted.as_str().to_string(),
                explored: self.true_explored.fraction(),
            }));
        }
        EpisodeLog {
            header: self.header.clone(),
            events,
        }
    }

    pub fn into_log(mut self) -> EpisodeLog {
        if self.status == Status::Running {
            self.close(Status::Aborted);
        }
        EpisodeLog {
            header: self.header.clone(),
            events: std::mem::take(&mut self.events),
        }
    }
}

impl Drop for Episode {
    fn drop(&mut self) {
        if let Some(Pending {
            job: PlanJob::Running(handle),
            ..
        }) = self.pending.take()
        {
            let _ = handle.join();
        }
    }
}

/// Runs an episode with the scripted human to termination.
pub fn run_episode(
    world: Arc<World>,
    config: &EpisodeConfig,
    setup: Setup,
) -> Result<EpisodeLog, SimError> {
    let mut episode = Episode::new(world, config, setup, HumanMode::Scripted)?;
    while episode.tick() == Status::Running {}
    Ok(episode.into_log())
}

/// Replays a recorded command trace headlessly. Commands hold between entries; the run ends at
/// termination or when the trace's last tick has been simulated.
pub fn run_trace(
    world: Arc<World>,
    config: &EpisodeConfig,
    setup: Setup,
    trace: &[TraceEntry],
    last_tick: u64,
) -> Result<EpisodeLog, SimError> {
    let mut episode = Episode::new(world, config, setup, HumanMode::External)?;
    let mut k = 0;
    while episode.status() == Status::Running && episode.tick_index() < last_tick {
        while k < trace.len() && trace[k].tick <= episode.tick_index() {
            match &trace[k].action {
                TraceAction::Command { vx, vy } => episode.set_human_command([*vx, *vy]),
                TraceAction::Instruction { instruction, clear } => {
                    let _ = episode.instruct(*instruction, *clear);
                }
            }
            k += 1;
        }
        episode.tick();
    }
    Ok(episode.into_log())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_world(w: usize, h: usize) -> Arc<World> {
        let grid = OccupancyGrid::new(w, h, 1.0, [0.0, 0.0], vec![false; w * h]).unwrap();
        Arc::new(World::new(grid, 8.0, 8.0))
    }

    fn config(robot: (f64, f64), human: (f64, f64)) -> EpisodeConfig {
        let origins = [(
            "A".to_string(),
            OriginSpec {
                robot: Pose::new(robot.0, robot.1),
                human: Pose::new(human.0, human.1),
            },
        )]
        .into();
        EpisodeConfig {
            map: "inline".into(),
            origins,
            origin: "A".into(),
            robot: AgentConfig::robot(),
            human: AgentConfig::human(),
            dt: 0.1,
            replan_period: 2.0,
            termination: Termination::default(),
            comm_level: CommLevel::L1,
            seed: 3,
            planner: crate::planner::PlannerConfig {
                max_nodes: 300,
                ..episode_planner()
            },
            planning_latency_ticks: 1,
            human_refresh: 1.0,
            search: Default::default(),
            comms: Default::default(),
            base_dir: Default::default(),
        }
    }

    #[test]
    fn human_speed_clamped() {
        let world = open_world(10, 10);
        let mut cfg = config((1.5, 1.5), (2.5, 5.5));
        cfg.termination = Termination {
            rule: TerminationRule::ExploredFraction,
            tau: 1.0,
            timeout: 100.0,
        };
        let mut ep = Episode::new(
            world,
            &cfg,
            Setup::Collab(CommLevel::L1),
            HumanMode::External,
        )
        .unwrap();
        assert_eq!(ep.status(), Status::Running);
        ep.set_human_command([20.0, 0.0]);
        let before = ep.human().pose;
        ep.tick();
        let moved = ep.human().pose.distance(&before);
        assert!((moved - 0.1).abs() < 1e-12);
    }

    #[test]
    fn follow_straight_line() {
        let wps = [Pose::new(0.0, 0.0), Pose::new(7.0, 0.0)];
        let mut pose = wps[0];
        let mut next = 1;
        let mut ticks = 0;
        while next < wps.len() {
            (pose, next) = follow(pose, &wps, next, 0.7);
            ticks += 1;
        }
        assert_eq!(ticks, 10);
        assert_eq!(pose.x, 7.0);
    }

    #[test]
    fn slide_along_wall() {
        let g = OccupancyGrid::from_rows(&["...", "...", "###"], 1.0, [0.0, 0.0]).unwrap();
        // Row 0 is the lowest, so the wall is along y in [2, 3).
        let p = slide(&g, Pose::new(0.5, 1.95), [1.0, 1.0], 0.1);
        assert!((p.x - 0.6).abs() < 1e-12);
        assert_eq!(p.y, 1.95);
    }

    #[test]
    fn blocked_start_rejected() {
        let g = OccupancyGrid::from_rows(&["#..", "...", "..."], 1.0, [0.0, 0.0]).unwrap();
        let world = Arc::new(World::new(g, 8.0, 8.0));
        let cfg = config((0.5, 0.5), (1.5, 1.5));
        assert!(matches!(
            Episode::new(world, &cfg, Setup::RobotOnly, HumanMode::Scripted),
            Err(SimError::BlockedStart { agent: "robot", .. })
        ));
    }

    #[test]
    fn instructions_gated() {
        let world = open_world(10, 10);
        let cfg = config((1.5, 1.5), (2.5, 5.5));
        let mut ep = Episode::new(
            world,
            &cfg,
            Setup::Collab(CommLevel::L2),
            HumanMode::External,
        )
        .unwrap();
        let i = Instruction {
            kind: crate::comms::InstructionKind::GoTo,
            center: [5.0, 5.0],
            radius: 1.0,
            issued_at: 0.0,
        };
        let err = ep.instruct(i, false).unwrap_err();
        assert_eq!(err.to_string(), "instructions require L3");
    }

    #[test]
    fn setup_names_round_trip() {
        for s in Setup::ALL {
            assert_eq!(s.to_string().parse::<Setup>().unwrap(), s);
        }
        assert!("collab-L4".parse::<Setup>().is_err());
    }
}
