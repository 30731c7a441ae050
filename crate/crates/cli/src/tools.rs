use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use srs_search::comms::CommLevel;
use srs_search::metrics::{aggregate, progress, write_aggregate_csv, Attribution, EpisodeLog};
use srs_search::obsgraph::{score_raster, BeliefField, SearchScores};
use srs_search::session::replay;
use srs_search::sim::{EpisodeConfig, TraceEntry, World};

/// Everything needed to re-run a live session headlessly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub session: String,
    pub level: CommLevel,
    pub origin: String,
    pub seed: u64,
    pub last_tick: u64,
    pub entries: Vec<TraceEntry>,
}

/// Expands directories into their `.eplog` files, sorted by name.
pub fn collect_logs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "eplog"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn analyze(
    paths: &[PathBuf],
    window: f64,
    out: impl Write,
    curves: Option<&Path>,
) -> Result<usize> {
    let files = collect_logs(paths)?;
    let logs = files
        .iter()
        .map(|f| EpisodeLog::load(f).with_context(|| format!("reading {}", f.display())))
        .collect::<Result<Vec<_>>>()?;
    write_aggregate_csv(&aggregate(&logs, window), out)?;
    if let Some(path) = curves {
        let mut w =
            fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        writeln!(w, "log,by,t,fraction")?;
        for (file, log) in files.iter().zip(&logs) {
            let name = file
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            for by in [Attribution::Total, Attribution::Robot, Attribution::Human] {
                let label = serde_json::to_value(by)?
                    .as_str()
                    .unwrap_or_default()
                    .to_string();
                for s in progress(log, by).downsample(1.0).samples {
                    writeln!(w, "{name},{label},{:.1},{:.6}", s.t, s.fraction)?;
                }
            }
        }
    }
    Ok(logs.len())
}

/// Score layers for the configured origin: `uniform` ignores any sensing, `initial` zeroes the
/// cells the robot sees from its start pose.
pub fn render_field(config: &EpisodeConfig, initial: bool) -> Result<serde_json::Value> {
    let world = World::load(config)?;
    let mut belief = BeliefField::uniform(world.grid.free_count());
    if initial {
        let start = config.origin_spec()?.robot;
        belief.mark_explored(&world.grid.visible_cells(&start, config.robot.sense_radius));
    }
    let scores = SearchScores::compute(&world.robot_graph, &belief, config.search);
    Ok(score_raster(&world.grid, &scores))
}

pub fn replay_trace(config: &EpisodeConfig, trace: &TraceFile) -> Result<EpisodeLog> {
    let mut cfg = config.clone();
    cfg.origin = trace.origin.clone();
    cfg.seed = trace.seed;
    let world = Arc::new(World::load(&cfg)?);
    Ok(replay(
        world,
        &cfg,
        trace.level,
        &trace.entries,
        trace.last_tick,
    )?)
}
