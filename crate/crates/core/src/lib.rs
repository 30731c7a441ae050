//! Human-robot collaborative search with social reward sources.
//!
//! The robot plans with a multi-tree RRT* whose costs come from a registry of attractive and
//! repulsive reward sources. Its task reward is an observability/isolation field over a
//! discretized map, and a human partner can reshape the registry with five instructions.
//!
//! Modules, bottom-up:
//! - [`worldmap`]: occupancy grid, line of sight, radial visibility
//! - [`srs`]: reward sources and their registry
//! - [`obsgraph`]: observability graph and the search reward field
//! - [`planner`]: the sourced RRT* planner
//! - [`comms`]: human instructions and level-gated views
//! - [`sim`]: two-agent search episodes
//! - [`metrics`]: episode logs and progress/concurrency analysis
//! - [`session`]: message protocol for live sessions

pub mod comms;
pub mod metrics;
pub mod obsgraph;
pub mod planner;
pub mod session;
pub mod sim;
pub mod srs;
pub mod worldmap;

pub use obsgraph::{BeliefField, ObservabilityGraph, SearchScores, SearchWeights};
pub use planner::{Plan, PlannerConfig};
pub use srs::{RewardSource, SourceRegistry, SourceSet};
pub use worldmap::{CellId, OccupancyGrid, Pose};
