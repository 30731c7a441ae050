//! Social reward sources.
//!
//! A source is a spatial generator of attraction or repulsion. Besides its decay model and
//! footprint it carries a nature (how its value enters a path cost) and an application
//! policy (whether it shapes tree growth, path selection, or both). Values are dimensionless
//! rewards; cumulative sources are read as densities per meter of traversal.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::worldmap::{GridFrame, Pose};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("invalid source `{id}`: {reason}")]
    Invalid { id: String, reason: String },
    #[error("failed to read source file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse source file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceId(pub String);

impl SourceId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Attractive,
    Repulsive,
}

impl SourceKind {
    pub fn sign(self) -> f64 {
        match self {
            SourceKind::Attractive => 1.0,
            SourceKind::Repulsive => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Generation,
    Selection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nature {
    Cumulative,
    Consumable,
    Final,
}

/// Non-empty set of application policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Policy>", into = "Vec<Policy>")]
pub struct PolicySet {
    generation: bool,
    selection: bool,
}

impl PolicySet {
    pub const GENERATION: PolicySet = PolicySet {
        generation: true,
        selection: false,
    };
    pub const SELECTION: PolicySet = PolicySet {
        generation: false,
        selection: true,
    };
    pub const BOTH: PolicySet = PolicySet {
        generation: true,
        selection: true,
    };

    pub fn contains(&self, policy: Policy) -> bool {
        match policy {
            Policy::Generation => self.generation,
            Policy::Selection => self.selection,
        }
    }
}

impl TryFrom<Vec<Policy>> for PolicySet {
    type Error = String;

    fn try_from(list: Vec<Policy>) -> Result<Self, Self::Error> {
        if list.is_empty() {
            return Err("policies must name at least one of generation, selection".into());
        }
        Ok(PolicySet {
            generation: list.contains(&Policy::Generation),
            selection: list.contains(&Policy::Selection),
        })
    }
}

impl From<PolicySet> for Vec<Policy> {
    fn from(set: PolicySet) -> Self {
        let mut out = Vec::new();
        if set.generation {
            out.push(Policy::Generation);
        }
        if set.selection {
            out.push(Policy::Selection);
        }
        out
    }
}

/// Per-cell value table over one grid frame, indexed by row-major grid index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTable {
    pub frame: GridFrame,
    pub values: Vec<Option<f64>>,
}

impl FieldTable {
    pub fn value_at(&self, p: &Pose) -> f64 {
        self.frame
            .cell_coords(p.x, p.y)
            .and_then(|(ix, iy)| self.values.get(self.frame.index(ix, iy)).copied().flatten())
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceModel {
    GaussianDecay {
        amplitude: f64,
        sigma: f64,
    },
    PowerDecay {
        amplitude: f64,
        scale: f64,
        exponent: f64,
    },
    GraphField {
        table: Arc<FieldTable>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Footprint {
    Point,
    Disk { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub center: Pose,
    pub footprint: Footprint,
}

impl ShapeSpec {
    pub fn point(x: f64, y: f64) -> Self {
        Self {
            center: Pose::new(x, y),
            footprint: Footprint::Point,
        }
    }

    pub fn disk(x: f64, y: f64, radius: f64) -> Self {
        Self {
            center: Pose::new(x, y),
            footprint: Footprint::Disk { radius },
        }
    }

    pub fn contains(&self, p: &Pose) -> bool {
        match self.footprint {
            Footprint::Point => false,
            Footprint::Disk { radius } => self.center.distance(p) <= radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DynamicsSpec {
    pub velocity: [f64; 2],
}

impl DynamicsSpec {
    pub fn is_static(&self) -> bool {
        self.velocity == [0.0, 0.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSource {
    pub id: SourceId,
    pub kind: SourceKind,
    pub policies: PolicySet,
    pub nature: Nature,
    pub model: SourceModel,
    pub shape: ShapeSpec,
    #[serde(default, flatten)]
    pub dynamics: DynamicsSpec,
    #[serde(default)]
    pub expiry: Option<f64>,
    /// Simulation time at which `shape.center` is current.
    #[serde(default)]
    pub stamp: f64,
}

impl RewardSource {
    pub fn new(
        id: impl Into<String>,
        kind: SourceKind,
        policies: PolicySet,
        nature: Nature,
        model: SourceModel,
        shape: ShapeSpec,
    ) -> Self {
        Self {
            id: SourceId::new(id),
            kind,
            policies,
            nature,
            model,
            shape,
            dynamics: DynamicsSpec::default(),
            expiry: None,
            stamp: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        let bad = |reason: &str| {
            Err(SourceError::Invalid {
                id: self.id.0.clone(),
                reason: reason.to_string(),
            })
        };
        match &self.model {
            SourceModel::GaussianDecay { amplitude, sigma } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return bad("amplitude must be finite and non-negative");
                }
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return bad("sigma must be positive");
                }
            }
            SourceModel::PowerDecay {
                amplitude,
                scale,
                exponent,
            } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return bad("amplitude must be finite and non-negative");
                }
                if !(scale.is_finite() && *scale > 0.0) {
                    return bad("scale must be positive");
                }
                if !(exponent.is_finite() && *exponent > 0.0) {
                    return bad("exponent must be positive");
                }
            }
            SourceModel::GraphField { table } => {
                if table.values.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("field values must be finite");
                }
            }
        }
        if let Footprint::Disk { radius } = self.shape.footprint {
            if !(radius.is_finite() && radius >= 0.0) {
                return bad("disk radius must be non-negative");
            }
        }
        if !self.dynamics.velocity.iter().all(|v| v.is_finite()) {
            return bad("velocity must be finite");
        }
        if !(self.shape.center.x.is_finite() && self.shape.center.y.is_finite()) {
            return bad("center must be finite");
        }
        Ok(())
    }

    /// Footprint center at simulation time `t`.
    pub fn center_at(&self, t: f64) -> Pose {
        let dt = t - self.stamp;
        let [vx, vy] = self.dynamics.velocity;
        if dt == 0.0 || self.dynamics.is_static() {
            return self.shape.center;
        }
        Pose {
            x: self.shape.center.x + vx * dt,
            y: self.shape.center.y + vy * dt,
            ..self.shape.center
        }
    }

    /// Distance from `p` to the footprint at time `t`; zero inside a disk.
    pub fn effective_distance(&self, p: &Pose, t: f64) -> f64 {
        let d = self.center_at(t).distance(p);
        match self.shape.footprint {
            Footprint::Point => d,
            Footprint::Disk { radius } => (d - radius).max(0.0),
        }
    }

    /// Signed reward at `p`; repulsive sources are negative.
    pub fn evaluate(&self, p: &Pose, t: f64) -> f64 {
        let magnitude = match &self.model {
            SourceModel::GaussianDecay { amplitude, sigma } => {
                let d = self.effective_distance(p, t);
                amplitude * (-(d * d) / (2.0 * sigma * sigma)).exp()
            }
            SourceModel::PowerDecay {
                amplitude,
                scale,
                exponent,
            } => {
                let d = self.effective_distance(p, t);
                amplitude / (1.0 + (d / scale).powf(*exponent))
            }
            SourceModel::GraphField { table } => table.value_at(p),
        };
        self.kind.sign() * magnitude
    }

    /// Cost-mirrored value at `p`.
    pub fn cost_at(&self, p: &Pose, t: f64) -> f64 {
        cost_of(self.evaluate(p, t))
    }
}

/// A positive reward is a negative cost and vice versa.
pub fn cost_of(reward: f64) -> f64 {
    -reward
}

/// Immutable view of a registry at one revision, as handed to the planner.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceSet {
    pub revision: u64,
    sources: Vec<RewardSource>,
}

impl SourceSet {
    /// Builds a set from arbitrary sources, sorted by id.
    pub fn from_sources(revision: u64, mut sources: Vec<RewardSource>) -> Self {
        sources.sort_by(|a, b| a.id.cmp(&b.id));
        Self { revision, sources }
    }

    pub fn with_source(mut self, source: RewardSource) -> Self {
        self.sources.retain(|s| s.id != source.id);
        self.sources.push(source);
        self.sources.sort_by(|a, b| a.id.cmp(&b.id));
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = &RewardSource> {
        self.sources.iter()
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// All sources with the given policy and nature, ordered by id.
    pub fn sources_by(&self, policy: Policy, nature: Nature) -> Vec<&RewardSource> {
        self.sources
            .iter()
            .filter(|s| s.nature == nature && s.policies.contains(policy))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DynamicsReport {
    pub moved: Vec<SourceId>,
    pub expired: Vec<SourceId>,
    pub revision: u64,
}

impl DynamicsReport {
    pub fn changed(&self) -> bool {
        !self.moved.is_empty() || !self.expired.is_empty()
    }
}

/// Id-keyed source collection with a revision bumped on every mutation.
#[derive(Debug, Clone, Default)]
pub struct SourceRegistry {
    sources: BTreeMap<SourceId, RewardSource>,
    revision: u64,
}

impl SourceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn get(&self, id: &SourceId) -> Option<&RewardSource> {
        self.sources.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RewardSource> {
        self.sources.values()
    }

    /// Inserts or replaces a source.
    pub fn upsert(&mut self, source: RewardSource) -> Result<u64, SourceError> {
        source.validate()?;
        self.sources.insert(source.id.clone(), source);
        self.revision += 1;
        Ok(self.revision)
    }

    pub fn remove(&mut self, id: &SourceId) -> Option<RewardSource> {
        let removed = self.sources.remove(id);
        if removed.is_some() {
            self.revision += 1;
        }
        removed
    }

    pub fn sources_by(&self, policy: Policy, nature: Nature) -> Vec<&RewardSource> {
        self.sources
            .values()
            .filter(|s| s.nature == nature && s.policies.contains(policy))
            .collect()
    }

    pub fn snapshot(&self) -> SourceSet {
        SourceSet {
            revision: self.revision,
            sources: self.sources.values().cloned().collect(),
        }
    }

    /// Advances moving sources by `velocity·dt` and drops sources whose expiry is before `now`.
    pub fn step_dynamics(&mut self, dt: f64, now: f64) -> DynamicsReport {
        let mut report = DynamicsReport::default();
        let expired: Vec<SourceId> = self
            .sources
            .values()
            .filter(|s| s.expiry.is_some_and(|e| now > e))
            .map(|s| s.id.clone())
            .collect();
        for id in &expired {
            self.sources.remove(id);
        }
        report.expired = expired;
        if dt > 0.0 {
            for source in self.sources.values_mut() {
                if source.dynamics.is_static() {
                    continue;
                }
                let [vx, vy] = source.dynamics.velocity;
                source.shape.center.x += vx * dt;
                source.shape.center.y += vy * dt;
                source.stamp += dt;
                report.moved.push(source.id.clone());
            }
        }
        if report.changed() {
            self.revision += 1;
        }
        report.revision = self.revision;
        report
    }
}

/// Reads a list of source records.
pub fn load_sources(path: impl AsRef<Path>) -> Result<Vec<RewardSource>, SourceError> {
    let sources: Vec<RewardSource> = serde_json::from_str(&fs::read_to_string(path)?)?;
    for s in &sources {
        s.validate()?;
    }
    Ok(sources)
}
