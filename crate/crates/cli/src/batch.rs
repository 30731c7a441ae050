use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use srs_search::metrics::{aggregate, write_aggregate_csv, EpisodeLog, DEFAULT_WINDOW};
use srs_search::sim::{run_episode, EpisodeConfig, Setup, World};

/// One scheduled episode of a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub index: usize,
    pub origin: String,
    pub seed: u64,
}

impl Job {
    pub fn file_name(&self, setup: Setup) -> String {
        format!(
            "{setup}-{}-{:03}-seed{}.eplog",
            self.origin, self.index, self.seed
        )
    }
}

/// Round-robin over origins with consecutive seeds from `seed_base`.
pub fn schedule(origins: &[String], episodes: usize, seed_base: u64) -> Vec<Job> {
    (0..episodes)
        .map(|index| Job {
            index,
            origin: origins[index % origins.len()].clone(),
            seed: seed_base + index as u64,
        })
        .collect()
}

pub struct BatchReport {
    pub logs: Vec<PathBuf>,
    pub aggregate: PathBuf,
}

/// Runs a batch, writing one log per episode plus `aggregate.csv`.
pub fn run_batch(
    config: &EpisodeConfig,
    setup: Setup,
    episodes: usize,
    out: &Path,
) -> Result<BatchReport> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let probe = out.join(".write-test");
    fs::write(&probe, b"").with_context(|| format!("{} is not writable", out.display()))?;
    fs::remove_file(&probe).ok();

    let world = Arc::new(
        World::load(config).with_context(|| format!("loading {}", config.map_path().display()))?,
    );
    let labels = config.origin_labels();
    if labels.is_empty() {
        bail!("config has no origins");
    }
    let jobs = schedule(&labels, episodes, config.seed);
    let logs: Vec<(PathBuf, EpisodeLog)> = jobs
        .par_iter()
        .map(|job| {
            let mut cfg = config.clone();
            cfg.origin = job.origin.clone();
            cfg.seed = job.seed;
            let log = run_episode(world.clone(), &cfg, setup)?;
            let path = out.join(job.file_name(setup));
            log.save(&path)
                .with_context(|| format!("writing {}", path.display()))?;
            Ok((path, log))
        })
        .collect::<Result<_>>()?;

    let just_logs: Vec<EpisodeLog> = logs.iter().map(|(_, l)| l.clone()).collect();
    let rows = aggregate(&just_logs, DEFAULT_WINDOW);
    let aggregate_path = out.join("aggregate.csv");
    let file = fs::File::create(&aggregate_path)
        .with_context(|| format!("writing {}", aggregate_path.display()))?;
    write_aggregate_csv(&rows, file)?;
    Ok(BatchReport {
        logs: logs.into_iter().map(|(p, _)| p).collect(),
        aggregate: aggregate_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_episodes_two_per_origin() {
        let origins: Vec<String> = ["A", "B", "C"].map(String::from).to_vec();
        let jobs = schedule(&origins, 6, 10);
        for o in &origins {
            assert_eq!(jobs.iter().filter(|j| &j.origin == o).count(), 2);
        }
        assert_eq!(
            jobs.iter().map(|j| j.seed).collect::<Vec<_>>(),
            vec![10, 11, 12, 13, 14, 15]
        );
        assert!(schedule(&origins, 0, 0).is_empty());
    }
}
