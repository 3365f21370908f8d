use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EpisodePercentiles, EpisodeRecord, ExperimentConfig, TrainResult, ValidationReport};
use crate::error::{Error, Result};
use crate::features::FeatureMap;

/// Caveat carried in every manifest.
pub const BEHAVIOR_CAVEAT: &str =
    "behavior policy depends on the current parameter; convergence theory does not cover this case";

/// `d` little-endian `f64` values, nothing else.
pub fn write_theta(path: &Path, theta: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(theta.len() * 8);
    for v in theta {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_theta(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Shape(format!("{}: {} bytes is not a whole number of f64", path.display(), bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaMeta {
    pub dim: usize,
    pub num_actions: usize,
    pub basis: String,
    pub config_name: String,
    pub seed: u64,
    pub episodes: usize,
}

impl ThetaMeta {
    pub fn new(cfg: &ExperimentConfig, features: &dyn FeatureMap, run: &TrainResult) -> Self {
        Self {
            dim: features.dim(),
            num_actions: features.num_actions(),
            basis: features.describe(),
            config_name: cfg.name.clone(),
            seed: run.seed,
            episodes: run.records.len(),
        }
    }
}

pub fn read_theta_meta(path: &Path) -> Result<ThetaMeta> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// One row per episode.
pub fn write_metrics_csv<W: Write>(records: &[EpisodeRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "episode",
        "epsilon",
        "gamma",
        "reward",
        "validation_reward",
        "theta_norm",
        "step_norm",
        "segments",
        "raw_steps",
        "reached_goal",
        "status",
    ])?;
    for r in records {
        w.write_record([
            r.episode.to_string(),
            fmt(r.epsilon),
            fmt(r.gamma),
            fmt(r.reward),
            r.validation_reward.map(fmt).unwrap_or_default(),
            fmt(r.theta_norm()),
            fmt(r.step_norm),
            r.length().to_string(),
            r.raw_steps().to_string(),
            r.reached_goal.to_string(),
            r.status.label().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_percentiles_csv<W: Write>(rows: &[EpisodePercentiles], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "p10", "p50", "p90"])?;
    for r in rows {
        w.write_record([r.episode.to_string(), fmt(r.p10), fmt(r.p50), fmt(r.p90)])?;
    }
    w.flush()?;
    Ok(())
}

/// Everything needed to replay a run. No timestamps, so reruns match byte
/// for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub episodes_completed: usize,
    pub failed_updates: usize,
    pub aborted: Option<String>,
    pub final_theta_norm: f64,
    pub validation: Option<ValidationReport>,
    pub basis: String,
    pub files: Vec<String>,
    pub caveat: String,
}

/// Write `metrics.csv`, `theta.bin`, `theta.json`, `theta0.bin` and
/// `manifest.json` into `dir`. Files go to a temporary name first and are
/// renamed once complete.
pub fn persist_run(
    dir: &Path,
    cfg: &ExperimentConfig,
    features: &dyn FeatureMap,
    run: &TrainResult,
    validation: Option<&ValidationReport>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let finish = |name: &str, write: &dyn Fn(&Path) -> Result<()>| -> Result<PathBuf> {
        let tmp = dir.join(format!(".{name}.partial"));
        write(&tmp)?;
        let path = dir.join(name);
        fs::rename(&tmp, &path)?;
        Ok(path)
    };
    let mut written = Vec::new();
    written.push(finish("metrics.csv", &|p| {
        let mut f = BufWriter::new(File::create(p)?);
        write_metrics_csv(&run.records, &mut f)?;
        f.flush()?;
        Ok(())
    })?);
    written.push(finish("theta.bin", &|p| write_theta(p, &run.theta))?);
    written.push(finish("theta0.bin", &|p| write_theta(p, &run.theta0))?);
    let meta = ThetaMeta::new(cfg, features, run);
    written.push(finish("theta.json", &|p| {
        fs::write(p, serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    })?);
    let mut files: Vec<String> = written
        .iter()
        .map(|p| p.file_name().expect("file").to_string_lossy().into_owned())
        .collect();
    files.push("manifest.json".into());
    let manifest = RunManifest {
        config: cfg.clone(),
        seed: run.seed,
        episodes_completed: run.records.len(),
        failed_updates: run
            .records
            .iter()
            .filter(|r| matches!(r.status, super::UpdateStatus::Failed { .. }))
            .count(),
        aborted: run.aborted.clone(),
        final_theta_norm: run.theta.iter().map(|x| x * x).sum::<f64>().sqrt(),
        validation: validation.cloned(),
        basis: features.describe(),
        files,
        caveat: BEHAVIOR_CAVEAT.into(),
    };
    written.push(finish("manifest.json", &|p| {
        fs::write(p, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    })?);
    Ok(written)
}
