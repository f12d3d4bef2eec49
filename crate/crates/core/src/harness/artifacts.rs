use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::continual::ContinualRun;
use super::metrics::GateStage;
use crate::calibration::CalibrationReport;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::train::TrainRecord;

/// Everything needed to re-execute a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub calibration: Option<CalibrationReport>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, calibration: Option<CalibrationReport>) -> Self {
        Self {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            config: cfg.clone(),
            calibration,
            files: Vec::new(),
        }
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One row per epoch per evaluation set.
pub fn write_metrics_csv(path: &Path, records: &[TrainRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "task",
        "epoch",
        "global_epoch",
        "eval_set",
        "accuracy",
        "cross_entropy",
        "spikes_per_inference",
        "unit_rate_std",
        "train_loss",
        "train_cross_entropy",
        "train_variance",
        "train_accuracy",
    ])?;
    let mut global = 0;
    for rec in records {
        for ep in &rec.epochs {
            global += 1;
            for e in &ep.evals {
                w.write_record([
                    rec.task.clone(),
                    ep.epoch.to_string(),
                    global.to_string(),
                    e.name.clone(),
                    e.accuracy.to_string(),
                    e.cross_entropy.to_string(),
                    e.spikes_per_inference().to_string(),
                    e.unit_rate_std.to_string(),
                    ep.train_loss.to_string(),
                    ep.train_cross_entropy.to_string(),
                    ep.train_variance.to_string(),
                    ep.train_accuracy.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `gates_layer{l}.csv` per layer with one row per stage and bin.
pub fn write_gate_csvs(dir: &Path, stages: &[GateStage]) -> Result<Vec<PathBuf>> {
    let layers = stages.first().map_or(0, |s| s.layers.len());
    let mut paths = Vec::with_capacity(layers);
    for l in 0..layers {
        let path = dir.join(format!("gates_layer{l}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["stage", "bin", "lo", "hi", "mass"])?;
        for stage in stages {
            let h = &stage.layers[l];
            for (k, m) in h.bins.iter().enumerate() {
                let (lo, hi) = h.edges(k);
                w.write_record([stage.stage.clone(), k.to_string(), lo.to_string(), hi.to_string(), m.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Persists a continual run: metrics.csv, summary.json, gate histograms,
/// per-task checkpoints and run_manifest.json.
pub fn write_run(dir: &Path, command: &str, cfg: &ExperimentConfig, run: &ContinualRun) -> Result<RunManifest> {
    create_dir(dir)?;
    let mut manifest = RunManifest::new(command, cfg, run.calibration.clone());
    let config_path = dir.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml_string()).map_err(|e| Error::io(&config_path, e))?;
    manifest.files.push("config.toml".into());
    write_metrics_csv(&dir.join("metrics.csv"), &run.records)?;
    manifest.files.push("metrics.csv".into());
    write_json(&dir.join("summary.json"), &run.metrics)?;
    manifest.files.push("summary.json".into());
    write_json(&dir.join("train_record.json"), &run.records)?;
    manifest.files.push("train_record.json".into());
    for p in write_gate_csvs(dir, &run.metrics.gates)? {
        manifest.files.push(file_name(&p));
    }
    for (task, ck) in &run.checkpoints {
        let name = format!("checkpoint_{task}.ltgc");
        ck.save(dir.join(&name))?;
        manifest.files.push(name);
    }
    manifest.files.push("run_manifest.json".into());
    write_json(&dir.join("run_manifest.json"), &manifest)?;
    Ok(manifest)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
