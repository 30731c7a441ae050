use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::comms::{CommLevel, CommsConfig};
use crate::obsgraph::SearchWeights;
use crate::planner::PlannerConfig;
use crate::worldmap::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub sense_radius: f64,
    pub max_speed: f64,
}

impl AgentConfig {
    pub fn robot() -> Self {
        Self {
            sense_radius: 8.0,
            max_speed: 0.7,
        }
    }

    pub fn human() -> Self {
        Self {
            sense_radius: 8.0,
            max_speed: 1.0,
        }
    }
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self::robot()
    }
}

fn default_robot() -> AgentConfig {
    AgentConfig::robot()
}

fn default_human() -> AgentConfig {
    AgentConfig::human()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginSpec {
    pub robot: Pose,
    pub human: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationRule {
    FindObject,
    ExploredFraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Termination {
    pub rule: TerminationRule,
    /// Target explored fraction for [`TerminationRule::ExploredFraction`].
    pub tau: f64,
    /// Hard stop in seconds, whatever the rule.
    pub timeout: f64,
}

impl Default for Termination {
    fn default() -> Self {
        Self {
            rule: TerminationRule::FindObject,
            tau: 0.9,
            timeout: 900.0,
        }
    }
}

/// Planner settings used inside episodes: unbudgeted so plans depend on the seed alone, and a
/// small connection cost so the search reward (at most ln 2) outweighs travel.
pub fn episode_planner() -> PlannerConfig {
    PlannerConfig {
        max_nodes: 4000,
        time_budget_ms: None,
        lambda: 0.02,
        ..PlannerConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Map file, relative to the config file.
    pub map: String,
    pub origins: BTreeMap<String, OriginSpec>,
    #[serde(default = "default_origin")]
    pub origin: String,
    #[serde(default = "default_robot")]
    pub robot: AgentConfig,
    #[serde(default = "default_human")]
    pub human: AgentConfig,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_replan")]
    pub replan_period: f64,
    #[serde(default)]
    pub termination: Termination,
    #[serde(default = "default_level")]
    pub comm_level: CommLevel,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "episode_planner")]
    pub planner: PlannerConfig,
    /// Ticks between a plan request and its installation.
    #[serde(default = "default_latency")]
    pub planning_latency_ticks: u64,
    /// How often the scripted human refreshes its reward field, in seconds.
    #[serde(default = "default_refresh")]
    pub human_refresh: f64,
    #[serde(default)]
    pub search: SearchWeights,
    #[serde(default)]
    pub comms: CommsConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_origin() -> String {
    "A".into()
}
fn default_dt() -> f64 {
    0.1
}
fn default_replan() -> f64 {
    2.0
}
fn default_level() -> CommLevel {
    CommLevel::L1
}
fn default_latency() -> u64 {
    1
}
fn default_refresh() -> f64 {
    1.0
}

impl EpisodeConfig {
    pub fn from_json_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, SimError> {
        let mut config: Self =
            serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        config.base_dir = base_dir.into();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json_str(&text, base)
    }

    pub fn map_path(&self) -> PathBuf {
        self.base_dir.join(&self.map)
    }

    pub fn origin_spec(&self) -> Result<OriginSpec, SimError> {
        self.origins
            .get(&self.origin)
            .copied()
            .ok_or_else(|| SimError::UnknownOrigin(self.origin.clone()))
    }

    /// Origin labels in table order.
    pub fn origin_labels(&self) -> Vec<String> {
        self.origins.keys().cloned().collect()
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::Config(msg.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.replan_period > 0.0) {
            return bad("replan_period must be positive");
        }
        for (name, a) in [("robot", self.robot), ("human", self.human)] {
            if !(a.sense_radius >= 0.0 && a.max_speed >= 0.0 && a.max_speed.is_finite()) {
                return Err(SimError::Config(format!(
                    "{name}: radius and speed must be non-negative"
                )));
            }
        }
        if !(self.termination.timeout > 0.0) {
            return bad("termination.timeout must be positive");
        }
        if !(self.termination.tau > 0.0 && self.termination.tau <= 1.0) {
            return bad("termination.tau must lie in (0, 1]");
        }
        if !(self.human_refresh > 0.0) {
            return bad("human_refresh must be positive");
        }
        if self.origins.is_empty() {
            return bad("origins table is empty");
        }
        self.origin_spec()?;
        self.planner
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))
    }
}

/// Who is active in an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setup {
    /// The human stays put.
    RobotOnly,
    /// The robot stays put.
    HumanOnly,
    Collab(CommLevel),
}

impl Setup {
    pub const ALL: [Setup; 5] = [
        Setup::RobotOnly,
        Setup::HumanOnly,
        Setup::Collab(CommLevel::L1),
        Setup::Collab(CommLevel::L2),
        Setup::Collab(CommLevel::L3),
    ];

    pub fn level(self) -> CommLevel {
        match self {
            Setup::Collab(level) => level,
            _ => CommLevel::L1,
        }
    }

    /// Speeds after the setup's restrictions.
    pub fn apply(self, config: &EpisodeConfig) -> (AgentConfig, AgentConfig) {
        let (mut robot, mut human) = (config.robot, config.human);
        match self {
            Setup::RobotOnly => human.max_speed = 0.0,
            Setup::HumanOnly => robot.max_speed = 0.0,
            Setup::Collab(_) => {}
        }
        (robot, human)
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setup::RobotOnly => f.write_str("robot-only"),
            Setup::HumanOnly => f.write_str("human-only"),
            Setup::Collab(level) => write!(f, "collab-{level:?}"),
        }
    }
}

impl FromStr for Setup {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "robot-only" => Ok(Setup::RobotOnly),
            "human-only" => Ok(Setup::HumanOnly),
            "collab-L1" => Ok(Setup::Collab(CommLevel::L1)),
            "collab-L2" => Ok(Setup::Collab(CommLevel::L2)),
            "collab-L3" => Ok(Setup::Collab(CommLevel::L3)),
            other => Err(SimError::UnknownSetup(other.to_string())),
        }
    }
}
