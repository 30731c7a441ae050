use std::fs;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use srs_search::comms::CommLevel;
use srs_search::sim::{EpisodeConfig, Setup, World};
use srs_search_cli::batch::run_batch;
use srs_search_cli::server::{serve, ServeOptions};
use srs_search_cli::tools::{analyze, render_field, replay_trace, TraceFile};

#[derive(Parser)]
#[command(name = "srsearch", version, about = "Collaborative search simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Episode config file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "planner.max-nodes")]
    planner_max_nodes: Option<usize>,
    #[arg(long = "planner.seed")]
    planner_seed: Option<u64>,
    #[arg(long = "planner.lambda")]
    planner_lambda: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<EpisodeConfig> {
        let mut config = EpisodeConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(n) = self.planner_max_nodes {
            config.planner.max_nodes = n;
        }
        if let Some(s) = self.planner_seed {
            config.planner.seed = s;
        }
        if let Some(l) = self.planner_lambda {
            config.planner.lambda = l;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of episodes with the scripted human.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// robot-only, human-only, collab-L1, collab-L2 or collab-L3.
        #[arg(long, value_parser = parse_setup)]
        setup: Setup,
        #[arg(long, default_value_t = 6)]
        episodes: usize,
        /// Output directory for logs and the aggregate table.
        #[arg(long, env = "SRS_LOG_DIR", default_value = "logs")]
        out: PathBuf,
    },
    /// Host live sessions over websockets at /ws.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, value_parser = parse_level, default_value = "L3")]
        level: CommLevel,
        #[arg(long, env = "SRS_LOG_DIR", default_value = "logs")]
        log_dir: PathBuf,
        /// Seconds a session waits for a client before pausing.
        #[arg(long, default_value_t = 10.0)]
        grace: f64,
    },
    /// Summarize logs as a CSV table of medians and quartiles.
    Analyze {
        /// Log files or directories holding them.
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, default_value_t = 5.0)]
        window: f64,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write 1 Hz progress curves here.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Export the O/I/S/R layers of the search reward as JSON.
    RenderField {
        #[command(flatten)]
        config: ConfigArgs,
        /// Zero the cells the robot sees from its start pose first.
        #[arg(long)]
        initial: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a recorded session trace and write its log.
    Replay {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_setup(s: &str) -> Result<Setup, String> {
    s.parse()
        .map_err(|e: srs_search::sim::SimError| e.to_string())
}

fn parse_level(s: &str) -> Result<CommLevel, String> {
    match s {
        "L1" => Ok(CommLevel::L1),
        "L2" => Ok(CommLevel::L2),
        "L3" => Ok(CommLevel::L3),
        _ => Err(format!("unknown level {s:?} (expected L1, L2 or L3)")),
    }
}

fn write_out(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            setup,
            episodes,
            out,
        } => {
            let config = config.load()?;
            if episodes == 0 {
                eprintln!("warning: episodes = 0, writing an empty aggregate");
            }
            let report = run_batch(&config, setup, episodes, &out)?;
            eprintln!(
                "{} episode logs, aggregate in {}",
                report.logs.len(),
                report.aggregate.display()
            );
        }
        Command::Serve {
            config,
            bind,
            level,
            log_dir,
            grace,
        } => {
            let config = config.load()?;
            let world = Arc::new(World::load(&config)?);
            let options = ServeOptions {
                config,
                level,
                log_dir,
                tick_hz: 10.0,
                grace: Duration::from_secs_f64(grace),
            };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(bind).await?;
                serve(listener, world, options).await
            })?;
        }
        Command::Analyze {
            logs,
            window,
            out,
            curves,
        } => {
            anyhow::ensure!(window > 0.0, "window must be positive");
            let n = match &out {
                Some(p) => analyze(&logs, window, fs::File::create(p)?, curves.as_deref())?,
                None => analyze(&logs, window, io::stdout(), curves.as_deref())?,
            };
            eprintln!("{n} logs analyzed");
        }
        Command::RenderField {
            config,
            initial,
            out,
        } => {
            let raster = render_field(&config.load()?, initial)?;
            write_out(out.as_ref(), &serde_json::to_string(&raster)?)?;
        }
        Command::Replay { config, trace, out } => {
            let config = config.load()?;
            let text = fs::read_to_string(&trace)
                .with_context(|| format!("reading {}", trace.display()))?;
            let trace: TraceFile = serde_json::from_str(&text)?;
            replay_trace(&config, &trace)?.save(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(io::stderr).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
