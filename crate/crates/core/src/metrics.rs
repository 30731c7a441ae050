//! Episode logs and the analysis run over them.
//!
//! A log is one JSON object per line: a header, then tick summaries interleaved with plan,
//! instruction and find records, then a single termination record. Curves, concurrency and
//! aggregate tables are pure functions of closed logs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::InstructionKind;
use crate::planner::{CostBreakdown, EdgeCost, Plan};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_WINDOW: f64 = 5.0;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("malformed log: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: u32,
    pub build: String,
    pub setup: String,
    pub origin: String,
    pub seed: u64,
    pub dt: f64,
    pub free_cells: usize,
    pub object: usize,
    /// Cells sensed before the first tick, per agent.
    pub initial_robot: Vec<usize>,
    pub initial_human: Vec<usize>,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub robot: [f64; 2],
    pub human: [f64; 2],
    /// Cells first discovered this tick by each agent.
    pub robot_new: Vec<usize>,
    pub human_new: Vec<usize>,
    pub perceived: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub t: f64,
    pub requested_at: f64,
    pub waypoints: Vec<[f64; 2]>,
    pub cost: f64,
    pub breakdown: CostBreakdown,
    pub edges: Vec<EdgeRecord>,
    pub forest_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub length: f64,
    pub connection: f64,
    pub sources: f64,
}

impl From<&EdgeCost> for EdgeRecord {
    fn from(e: &EdgeCost) -> Self {
        Self {
            length: e.length,
            connection: e.connection,
            sources: e.sources,
        }
    }
}

impl PlanRecord {
    pub fn new(t: f64, requested_at: f64, plan: &Plan) -> Self {
        Self {
            t,
            requested_at,
            waypoints: plan.waypoints.iter().map(|p| [p.x, p.y]).collect(),
            cost: plan.cost,
            breakdown: plan.breakdown,
            edges: plan.edges.iter().map(EdgeRecord::from).collect(),
            forest_size: plan.forest_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub t: f64,
    pub kind: InstructionKind,
    pub center: [f64; 2],
    pub radius: f64,
    pub clear: bool,
    pub applied: bool,
    pub revision: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Robot,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoundRecord {
    pub t: f64,
    pub by: Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationRecord {
    pub t: f64,
    pub status: String,
    pub explored: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header(LogHeader),
    Tick(TickRecord),
    Plan(PlanRecord),
    Instruction(InstructionRecord),
    Found(FoundRecord),
    Termination(TerminationRecord),
}

impl LogRecord {
    pub fn time(&self) -> Option<f64> {
        match self {
            LogRecord::Header(_) => None,
            LogRecord::Tick(r) => Some(r.t),
            LogRecord::Plan(r) => Some(r.t),
            LogRecord::Instruction(r) => Some(r.t),
            LogRecord::Found(r) => Some(r.t),
            LogRecord::Termination(r) => Some(r.t),
        }
    }
}

/// A complete episode: header plus ordered events.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub events: Vec<LogRecord>,
}

impl EpisodeLog {
    pub fn ticks(&self) -> impl Iterator<Item = &TickRecord> {
        self.events.iter().filter_map(|e| match e {
            LogRecord::Tick(t) => Some(t),
            _ => None,
        })
    }

    pub fn termination(&self) -> Option<&TerminationRecord> {
        match self.events.last() {
            Some(LogRecord::Termination(t)) => Some(t),
            _ => None,
        }
    }

    pub fn end_time(&self) -> f64 {
        self.events
            .iter()
            .rev()
            .find_map(LogRecord::time)
            .unwrap_or(0.0)
    }

    /// Checks ordering: tick times strictly increase, no event goes back in time, and the
    /// termination record closes the log.
    pub fn validate(&self) -> Result<(), LogError> {
        if self.header.schema != SCHEMA_VERSION {
            return Err(LogError::Malformed(format!(
                "unsupported schema {}",
                self.header.schema
            )));
        }
        let mut last_tick = f64::NEG_INFINITY;
        let mut last = f64::NEG_INFINITY;
        for (k, event) in self.events.iter().enumerate() {
            let t = event
                .time()
                .ok_or_else(|| LogError::Malformed("header inside event stream".into()))?;
            if t < last {
                return Err(LogError::Malformed(format!("event {k} goes back in time")));
            }
            last = t;
            match event {
                LogRecord::Tick(tick) => {
                    if tick.t <= last_tick {
                        return Err(LogError::Malformed(format!(
                            "tick at {} does not advance",
                            tick.t
                        )));
                    }
                    last_tick = tick.t;
                }
                LogRecord::Termination(_) if k + 1 != self.events.len() => {
                    return Err(LogError::Malformed("termination record is not last".into()));
                }
                _ => {}
            }
        }
        if self.termination().is_none() {
            return Err(LogError::Malformed("missing termination record".into()));
        }
        Ok(())
    }

    pub fn write_to(&self, mut out: impl Write) -> io::Result<()> {
        let header = LogRecord::Header(self.header.clone());
        for record in std::iter::once(&header).chain(&self.events) {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let file = fs::File::create(path)?;
        let mut w = io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn parse(reader: impl BufRead) -> Result<Self, LogError> {
        let mut header = None;
        let mut events = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: LogRecord =
                serde_json::from_str(&line).map_err(|source| LogError::Parse {
                    line: k + 1,
                    source,
                })?;
            match record {
                LogRecord::Header(h) if header.is_none() && events.is_empty() => header = Some(h),
                LogRecord::Header(_) => return Err(LogError::Malformed("duplicate header".into())),
                _ if header.is_none() => {
                    return Err(LogError::Malformed(
                        "log does not start with a header".into(),
                    ))
                }
                other => events.push(other),
            }
        }
        let header = header.ok_or_else(|| LogError::Malformed("empty log".into()))?;
        Ok(Self { header, events })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LogError> {
        Self::parse(BufReader::new(fs::File::open(path)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribution {
    Total,
    Robot,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProgressSample {
    pub t: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProgressCurve {
    pub by: Attribution,
    pub samples: Vec<ProgressSample>,
}

impl ProgressCurve {
    pub fn final_fraction(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.fraction)
    }

    /// First time the curve reaches `tau`.
    pub fn time_to(&self, tau: f64) -> Option<f64> {
        self.samples
            .iter()
            .find(|s| s.fraction >= tau - 1e-12)
            .map(|s| s.t)
    }

    /// Last value at or before each multiple of `period`, through the final sample.
    pub fn downsample(&self, period: f64) -> Self {
        let mut out = Vec::new();
        let Some(end) = self.samples.last().map(|s| s.t) else {
            return self.clone();
        };
        let mut k = 0usize;
        let mut idx = 0usize;
        loop {
            let t = k as f64 * period;
            if t > end + 1e-9 {
                break;
            }
            while idx + 1 < self.samples.len() && self.samples[idx + 1].t <= t + 1e-9 {
                idx += 1;
            }
            out.push(ProgressSample {
                t,
                fraction: self.samples[idx].fraction,
            });
            k += 1;
        }
        if out.last().is_some_and(|s| s.t < end - 1e-9) {
            out.push(*self.samples.last().unwrap());
        }
        Self {
            by: self.by,
            samples: out,
        }
    }
}

/// Explored-fraction curve for one attribution, one sample per tick after the initial one.
///
/// Cells count for the agent that first sensed them; a cell first seen by both agents in the
/// same tick counts for both individual curves and once for the total.
pub fn progress(log: &EpisodeLog, by: Attribution) -> ProgressCurve {
    let total = log.header.free_cells.max(1) as f64;
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut absorb = |robot: &[usize], human: &[usize]| {
        match by {
            Attribution::Total => seen.extend(robot.iter().chain(human)),
            Attribution::Robot => seen.extend(robot),
            Attribution::Human => seen.extend(human),
        }
        seen.len() as f64 / total
    };
    // The initial sensing is simultaneous, so shared cells go to both agents.
    let mut samples = vec![ProgressSample {
        t: 0.0,
        fraction: absorb(&log.header.initial_robot, &log.header.initial_human),
    }];
    for tick in log.ticks() {
        samples.push(ProgressSample {
            t: tick.t,
            fraction: absorb(&tick.robot_new, &tick.human_new),
        });
    }
    ProgressCurve { by, samples }
}

pub fn time_to_fraction(log: &EpisodeLog, tau: f64) -> Option<f64> {
    progress(log, Attribution::Total).time_to(tau)
}

pub fn time_to_find(log: &EpisodeLog) -> Option<f64> {
    log.events.iter().find_map(|e| match e {
        LogRecord::Found(f) => Some(f.t),
        _ => None,
    })
}

/// Fraction of `window`-second slices of `[0, t_end]` in which both agents discovered at
/// least one new cell.
pub fn concurrent_activity(log: &EpisodeLog, window: f64) -> f64 {
    assert!(window > 0.0, "window must be positive");
    let t_end = log.end_time();
    let slots = ((t_end / window) - 1e-9).ceil().max(1.0) as usize;
    let mut robot = vec![false; slots];
    let mut human = vec![false; slots];
    let dt = log.header.dt;
    for tick in log.ticks() {
        // A tick covers (t - dt, t]; it belongs to the slice holding its start.
        let start = (tick.t - dt).max(0.0);
        let k = (((start + 1e-9) / window).floor() as usize).min(slots - 1);
        robot[k] |= !tick.robot_new.is_empty();
        human[k] |= !tick.human_new.is_empty();
    }
    let both = robot.iter().zip(&human).filter(|(r, h)| **r && **h).count();
    both as f64 / slots as f64
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    /// Logs in the group that never reached the quantity.
    pub missing: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Summary {
    pub fn of(values: &[Option<f64>]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().flatten().copied().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Self {
            n: v.len(),
            missing: values.len() - v.len(),
            median: quantile(&v, 0.5),
            q1: quantile(&v, 0.25),
            q3: quantile(&v, 0.75),
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

pub const METRICS: [&str; 4] = ["time_to_50", "time_to_90", "time_to_find", "concurrency"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub setup: String,
    pub origin: String,
    pub metric: &'static str,
    pub summary: Summary,
}

/// Per (setup, origin) summaries; groups with no value for a metric produce no row.
pub fn aggregate(logs: &[EpisodeLog], window: f64) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String), Vec<[Option<f64>; 4]>> = BTreeMap::new();
    for log in logs {
        let curve = progress(log, Attribution::Total);
        let values = [
            curve.time_to(0.5),
            curve.time_to(0.9),
            time_to_find(log),
            Some(concurrent_activity(log, window)),
        ];
        groups
            .entry((log.header.setup.clone(), log.header.origin.clone()))
            .or_default()
            .push(values);
    }
    let mut rows = Vec::new();
    for ((setup, origin), values) in groups {
        for (m, metric) in METRICS.iter().enumerate() {
            let column: Vec<Option<f64>> = values.iter().map(|v| v[m]).collect();
            if let Some(summary) = Summary::of(&column) {
                rows.push(AggregateRow {
                    setup: setup.clone(),
                    origin: origin.clone(),
                    metric,
                    summary,
                });
            }
        }
    }
    rows
}

pub fn write_aggregate_csv(rows: &[AggregateRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "setup", "origin", "metric", "n", "missing", "median", "q1", "q3", "iqr",
    ])?;
    for r in rows {
        let s = r.summary;
        w.write_record([
            r.setup.clone(),
            r.origin.clone(),
            r.metric.to_string(),
            s.n.to_string(),
            s.missing.to_string(),
            format!("{:.3}", s.median),
            format!("{:.3}", s.q1),
            format!("{:.3}", s.q3),
            format!("{:.3}", s.iqr()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
