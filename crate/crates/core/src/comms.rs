//! Human-to-robot instructions and what each communication level shows the human.
//!
//! General instructions become reward sources: "go to" is an attractive final source,
//! "pass through" an attractive consumable, "avoid" a repulsive cumulative density.
//! Informative messages update the robot's belief instead: "I'm going to" attenuates the
//! object prior inside the claimed region until the claim expires, "I've been here" marks the
//! region explored for good.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::obsgraph::BeliefField;
use crate::planner::Plan;
use crate::srs::{
    Nature, PolicySet, RewardSource, ShapeSpec, SourceError, SourceId, SourceKind, SourceModel,
    SourceRegistry,
};
use crate::worldmap::{CellId, CellMask, OccupancyGrid, Pose};

#[derive(Debug, Error)]
pub enum CommsError {
    #[error("instruction region center ({x:.2}, {y:.2}) is outside the map")]
    OutsideMap { x: f64, y: f64 },
    #[error("instruction radius must be positive, got {0}")]
    BadRadius(f64),
    #[error(transparent)]
    Source(#[from] SourceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CommLevel {
    L1,
    L2,
    L3,
}

impl CommLevel {
    pub fn shows_robot_intent(self) -> bool {
        self >= CommLevel::L2
    }

    pub fn accepts_instructions(self) -> bool {
        self == CommLevel::L3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionKind {
    GoTo,
    PassThrough,
    Avoid,
    ImGoingTo,
    BeenHere,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub kind: InstructionKind,
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default)]
    pub issued_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommsConfig {
    pub go_amplitude: f64,
    pub pass_amplitude: f64,
    /// Cost per meter inside an avoided region.
    pub avoid_amplitude: f64,
    /// Belief factor applied inside a claimed region.
    pub claim_attenuation: f64,
    /// Seconds a claim stays active.
    pub claim_duration: f64,
    /// Optional lifetime for pass-through and avoid sources.
    pub general_expiry: Option<f64>,
}

impl Default for CommsConfig {
    fn default() -> Self {
        Self {
            go_amplitude: 10.0,
            pass_amplitude: 2.0,
            avoid_amplitude: 5.0,
            claim_attenuation: 0.1,
            claim_duration: 120.0,
            general_expiry: None,
        }
    }
}

/// An "I'm going to" region currently discounting the object prior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Claim {
    pub id: String,
    pub center: [f64; 2],
    pub radius: f64,
    pub factor: f64,
    pub expires_at: f64,
    #[serde(skip)]
    pub cells: Vec<CellId>,
}

/// Instruction as shown back to the human at L3.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveInstruction {
    pub id: String,
    pub kind: InstructionKind,
    pub center: [f64; 2],
    pub radius: f64,
    pub issued_at: f64,
}

/// The robot's view of what has been searched, and the prior derived from it.
#[derive(Debug, Clone)]
pub struct Knowledge {
    pub perceived: CellMask,
    /// Cells added to `perceived` by a "been here" message rather than by sensing.
    pub comms_marked: CellMask,
    pub claims: Vec<Claim>,
    pub belief: BeliefField,
}

impl Knowledge {
    pub fn new(cells: usize) -> Self {
        Self {
            perceived: CellMask::new(cells),
            comms_marked: CellMask::new(cells),
            claims: Vec::new(),
            belief: BeliefField::uniform(cells),
        }
    }

    /// Adds sensed or inferred cells; returns how many were new.
    pub fn perceive(&mut self, cells: &[CellId]) -> usize {
        let fresh: Vec<CellId> = cells
            .iter()
            .copied()
            .filter(|c| self.perceived.insert(*c))
            .collect();
        self.belief.mark_explored(&fresh);
        fresh.len()
    }

    /// Prior implied by the explored mask and the active claims.
    pub fn implied_belief(&self) -> Vec<f64> {
        let mut mass: Vec<f64> = self
            .perceived
            .bits()
            .iter()
            .map(|&explored| if explored { 0.0 } else { 1.0 })
            .collect();
        for claim in &self.claims {
            for c in &claim.cells {
                mass[c.0] = (mass[c.0] * claim.factor).max(0.0);
            }
        }
        mass
    }

    pub fn rebuild_belief(&mut self) {
        let mass = self.implied_belief();
        self.belief.replace(mass);
    }

    /// Drops claims whose time is up. Returns whether any expired.
    pub fn expire_claims(&mut self, now: f64) -> bool {
        let before = self.claims.len();
        self.claims.retain(|c| now < c.expires_at);
        if self.claims.len() != before {
            self.rebuild_belief();
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ApplyReport {
    pub applied: bool,
    pub source: Option<String>,
    pub superseded: Option<String>,
    pub cells: usize,
    pub revision: u64,
}

/// Free cells whose centers lie in the disk, plus the cell holding the center.
pub fn region_cells(grid: &OccupancyGrid, center: [f64; 2], radius: f64) -> Vec<CellId> {
    let c = Pose::new(center[0], center[1]);
    let mut cells: Vec<CellId> = grid
        .free_cells()
        .filter(|&cell| grid.center(cell).distance(&c) <= radius)
        .collect();
    if let Some(own) = grid.cell_at(&c) {
        if !cells.contains(&own) {
            cells.push(own);
            cells.sort();
        }
    }
    cells
}

/// Registry, knowledge and bookkeeping that instructions act on.
#[derive(Debug, Clone)]
pub struct CommsState {
    pub registry: SourceRegistry,
    pub active: Vec<ActiveInstruction>,
    counter: u64,
}

impl Default for CommsState {
    fn default() -> Self {
        Self::new()
    }
}

pub const GO_TO_SOURCE_ID: &str = "goto";

impl CommsState {
    pub fn new() -> Self {
        Self {
            registry: SourceRegistry::new(),
            active: Vec::new(),
            counter: 0,
        }
    }

    pub fn apply(
        &mut self,
        instruction: &Instruction,
        grid: &OccupancyGrid,
        knowledge: &mut Knowledge,
        config: &CommsConfig,
    ) -> Result<ApplyReport, CommsError> {
        let [x, y] = instruction.center;
        let (x0, y0, x1, y1) = grid.bounds();
        if !(x >= x0 && x < x1 && y >= y0 && y < y1) {
            return Err(CommsError::OutsideMap { x, y });
        }
        if !(instruction.radius > 0.0 && instruction.radius.is_finite()) {
            return Err(CommsError::BadRadius(instruction.radius));
        }
        let cells = region_cells(grid, instruction.center, instruction.radius);
        if cells.is_empty() {
            return Ok(ApplyReport {
                revision: self.registry.revision(),
                ..ApplyReport::default()
            });
        }
        self.counter += 1;
        let r = instruction.radius;
        let mut report = ApplyReport {
            applied: true,
            cells: cells.len(),
            ..ApplyReport::default()
        };

        let source = |id: String, kind, policies, nature, amplitude: f64, shape: ShapeSpec| {
            RewardSource::new(
                id,
                kind,
                policies,
                nature,
                SourceModel::GaussianDecay {
                    amplitude,
                    sigma: r,
                },
                shape,
            )
        };
        let id = match instruction.kind {
            InstructionKind::GoTo => {
                // Peaked at the region center so the best endpoint lies well inside it.
                let s = source(
                    GO_TO_SOURCE_ID.to_string(),
                    SourceKind::Attractive,
                    PolicySet::SELECTION,
                    Nature::Final,
                    config.go_amplitude,
                    ShapeSpec::point(x, y),
                );
                if self.registry.get(&s.id).is_some() {
                    report.superseded = Some(GO_TO_SOURCE_ID.to_string());
                    self.active.retain(|a| a.kind != InstructionKind::GoTo);
                }
                self.registry.upsert(s)?;
                GO_TO_SOURCE_ID.to_string()
            }
            InstructionKind::PassThrough | InstructionKind::Avoid => {
                let (prefix, kind, nature, amplitude) =
                    if instruction.kind == InstructionKind::Avoid {
                        (
                            "avoid",
                            SourceKind::Repulsive,
                            Nature::Cumulative,
                            config.avoid_amplitude,
                        )
                    } else {
                        (
                            "pass",
                            SourceKind::Attractive,
                            Nature::Consumable,
                            config.pass_amplitude,
                        )
                    };
                let id = format!("{prefix}-{:04}", self.counter);
                let mut s = source(
                    id.clone(),
                    kind,
                    PolicySet::BOTH,
                    nature,
                    amplitude,
                    ShapeSpec::disk(x, y, r),
                );
                s.expiry = config.general_expiry.map(|e| instruction.issued_at + e);
                s.stamp = instruction.issued_at;
                self.registry.upsert(s)?;
                id
            }
            InstructionKind::ImGoingTo => {
                let id = format!("claim-{:04}", self.counter);
                let factor = config.claim_attenuation.max(0.0);
                for c in &cells {
                    let m = knowledge.belief.get(*c);
                    if m > 0.0 {
                        // Scaled in place; a rebuild on expiry recomputes from the mask.
                        let mut mass = knowledge.belief.mass().to_vec();
                        mass[c.0] = (m * factor).max(0.0);
                        knowledge.belief.replace(mass);
                    }
                }
                knowledge.claims.push(Claim {
                    id: id.clone(),
                    center: instruction.center,
                    radius: r,
                    factor,
                    expires_at: instruction.issued_at + config.claim_duration,
                    cells: cells.clone(),
                });
                id
            }
            InstructionKind::BeenHere => {
                for c in &cells {
                    if !knowledge.perceived.contains(*c) {
                        knowledge.comms_marked.insert(*c);
                    }
                }
                knowledge.perceive(&cells);
                format!("been-{:04}", self.counter)
            }
        };
        self.active.push(ActiveInstruction {
            id: id.clone(),
            kind: instruction.kind,
            center: instruction.center,
            radius: r,
            issued_at: instruction.issued_at,
        });
        report.source = Some(id);
        report.revision = self.registry.revision();
        Ok(report)
    }

    /// Removes every active instruction of one kind. "Been here" marks are permanent.
    pub fn clear(&mut self, kind: InstructionKind, knowledge: &mut Knowledge) -> ApplyReport {
        let mut report = ApplyReport::default();
        match kind {
            InstructionKind::GoTo | InstructionKind::PassThrough | InstructionKind::Avoid => {
                for a in self.active.iter().filter(|a| a.kind == kind) {
                    if self.registry.remove(&SourceId::new(a.id.clone())).is_some() {
                        report.applied = true;
                    }
                }
            }
            InstructionKind::ImGoingTo => {
                if !knowledge.claims.is_empty() {
                    knowledge.claims.clear();
                    knowledge.rebuild_belief();
                    report.applied = true;
                }
            }
            InstructionKind::BeenHere => {}
        }
        if kind != InstructionKind::BeenHere {
            self.active.retain(|a| a.kind != kind);
        }
        report.revision = self.registry.revision();
        report
    }

    /// Drops instruction records whose backing source or claim has gone.
    pub fn prune(&mut self, knowledge: &Knowledge) {
        let registry = &self.registry;
        self.active.retain(|a| match a.kind {
            InstructionKind::GoTo | InstructionKind::PassThrough | InstructionKind::Avoid => {
                registry.get(&SourceId::new(a.id.clone())).is_some()
            }
            InstructionKind::ImGoingTo => knowledge.claims.iter().any(|c| c.id == a.id),
            InstructionKind::BeenHere => true,
        });
    }
}

/// What the human sees at a given communication level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HumanView {
    pub clock: f64,
    pub robot: Pose,
    pub human: Pose,
    pub true_explored: Vec<CellId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perceived_explored: Option<Vec<CellId>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<Vec<Pose>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instructions: Option<Vec<ActiveInstruction>>,
}

/// Level-gated view: L1 shows progress and the robot, L2 adds the robot's perceived
/// progress and plan, L3 adds active instructions.
#[allow(clippy::too_many_arguments)]
pub fn visible_state(
    level: CommLevel,
    clock: f64,
    robot: Pose,
    human: Pose,
    true_explored: &CellMask,
    knowledge: &Knowledge,
    plan: Option<&Plan>,
    comms: &CommsState,
) -> HumanView {
    let intent = level.shows_robot_intent();
    HumanView {
        clock,
        robot,
        human,
        true_explored: true_explored.order().to_vec(),
        perceived_explored: intent.then(|| knowledge.perceived.order().to_vec()),
        plan: intent.then(|| plan.map(|p| p.waypoints.clone()).unwrap_or_default()),
        instructions: level.accepts_instructions().then(|| comms.active.clone()),
    }
}
