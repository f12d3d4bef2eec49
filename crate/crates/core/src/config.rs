//! Experiment configuration.
//!
//! A run is described by one TOML document with a section per pipeline
//! stage. Every section has defaults, unknown keys are rejected, and
//! [`ExperimentConfig::validate`] reports problems by dotted field path
//! (`model.tau_fast_ms`, `tasks[1].frequency_hz`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::CalibrationConfig;
use crate::data::{EncodingScheme, EncodingSpec};
use crate::error::{Error, Result};
use crate::network::{LayerSpec, NetworkMode, NeuronSettings};
use crate::neuron::{DecayPair, SpikeCondition};
use crate::rng::mix_seed;
use crate::train::{AdamConfig, LossConfig, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub calibration: CalibrationSection,
    pub tasks: Vec<TaskConfig>,
    pub exposure: ExposureConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            calibration: CalibrationSection::default(),
            tasks: vec![
                TaskConfig {
                    name: "fast".into(),
                    frequency_hz: 1000.0,
                    duration_ms: 50.0,
                    epochs: 100,
                    seed: None,
                },
                TaskConfig {
                    name: "slow".into(),
                    frequency_hz: 50.0,
                    duration_ms: 50.0,
                    epochs: 100,
                    seed: None,
                },
            ],
            exposure: ExposureConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Toy,
    Idx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub classes: usize,
    /// Toy generator: samples per class in each task's training split.
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub feature_dim: usize,
    pub separation: f64,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// IDX: training samples per task; tasks take disjoint consecutive slices.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// IDX: average-pool 2x2 before encoding.
    pub downsample: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Toy,
            classes: 10,
            train_per_class: 100,
            test_per_class: 20,
            feature_dim: 32,
            separation: 1.5,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            train_limit: None,
            test_limit: None,
            downsample: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden layers as `dense:UNITS` or `conv:FILTERS:KERNEL:STRIDE`. A dense
    /// output layer with one unit per class is appended.
    pub layers: Vec<String>,
    pub dt_ms: f64,
    pub tau_fast_ms: f64,
    pub tau_slow_ms: f64,
    pub v_th: f64,
    pub gamma_init: f64,
    pub gamma_spread: f64,
    pub mode: NetworkMode,
    pub surrogate_slope: f64,
    pub spike_condition: SpikeCondition,
    pub detach_reset: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let n = NeuronSettings::default();
        Self {
            layers: vec!["dense:128".into()],
            dt_ms: n.dt_ms,
            tau_fast_ms: n.tau_fast_ms,
            tau_slow_ms: n.tau_slow_ms,
            v_th: n.v_th,
            gamma_init: n.gamma_init,
            gamma_spread: n.gamma_spread,
            mode: NetworkMode::Ltgate,
            surrogate_slope: n.surrogate_slope,
            spike_condition: n.spike_condition,
            detach_reset: n.detach_reset,
        }
    }
}

impl ModelConfig {
    pub fn neuron_settings(&self) -> NeuronSettings {
        NeuronSettings {
            dt_ms: self.dt_ms,
            tau_fast_ms: self.tau_fast_ms,
            tau_slow_ms: self.tau_slow_ms,
            v_th: self.v_th,
            gamma_init: self.gamma_init,
            gamma_spread: self.gamma_spread,
            surrogate_slope: self.surrogate_slope,
            spike_condition: self.spike_condition,
            detach_reset: self.detach_reset,
        }
    }

    /// Hidden layers followed by the dense readout layer.
    pub fn layer_specs(&self, classes: usize) -> Result<Vec<LayerSpec>> {
        let mut specs = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, s)| parse_layer(s).map_err(|reason| Error::config(format!("model.layers[{i}]"), reason)))
            .collect::<Result<Vec<_>>>()?;
        specs.push(LayerSpec::Dense { units: classes });
        Ok(specs)
    }
}

/// Parses `dense:UNITS` or `conv:FILTERS:KERNEL:STRIDE`.
pub fn parse_layer(s: &str) -> std::result::Result<LayerSpec, String> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    let num = |p: &str, what: &str| -> std::result::Result<usize, String> {
        match p.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("{what} must be a positive integer, got `{p}` in `{s}`")),
            Ok(v) => Ok(v),
        }
    };
    match parts.as_slice() {
        ["dense", units] => Ok(LayerSpec::Dense {
            units: num(units, "units")?,
        }),
        ["conv", filters, kernel, stride] => Ok(LayerSpec::Conv2d {
            filters: num(filters, "filters")?,
            kernel: num(kernel, "kernel")?,
            stride: num(stride, "stride")?,
        }),
        _ => Err(format!("expected `dense:UNITS` or `conv:FILTERS:KERNEL:STRIDE`, got `{s}`")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub lambda_var: f64,
    pub mu_star: f64,
    pub sigma_star: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let loss = LossConfig::default();
        Self {
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            batch_size: 32,
            eval_batch_size: 100,
            lambda_var: loss.lambda_var,
            mu_star: loss.mu_star,
            sigma_star: loss.sigma_star,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub enabled: bool,
    pub target_rate: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub max_iters: usize,
    pub probe_batches: usize,
    pub probe_batch_size: usize,
    pub v_lo: f64,
    pub v_hi: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let c = CalibrationConfig::default();
        Self {
            enabled: true,
            target_rate: c.target_rate,
            band_lo: c.band_lo,
            band_hi: c.band_hi,
            max_iters: c.max_iters,
            probe_batches: c.probe_batches,
            probe_batch_size: 32,
            v_lo: c.v_lo,
            v_hi: c.v_hi,
        }
    }
}

impl CalibrationSection {
    pub fn to_config(&self) -> CalibrationConfig {
        CalibrationConfig {
            target_rate: self.target_rate,
            band_lo: self.band_lo,
            band_hi: self.band_hi,
            max_iters: self.max_iters,
            probe_batches: self.probe_batches,
            v_lo: self.v_lo,
            v_hi: self.v_hi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    pub frequency_hz: f64,
    pub duration_ms: f64,
    pub epochs: usize,
    /// Encoding seed; derived from the global seed and task index when absent.
    pub seed: Option<u64>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            name: "task".into(),
            frequency_hz: 1000.0,
            duration_ms: 50.0,
            epochs: 100,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExposureConfig {
    /// Run the exposure evaluation after the first task.
    pub enabled: bool,
    pub frequency_hz: f64,
    pub duration_ms: f64,
    /// Unlabelled samples streamed through the frozen network.
    pub samples: usize,
    /// Re-run threshold calibration on the exposure stream.
    pub recalibrate: bool,
}

impl Default for ExposureConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            frequency_hz: 10.0,
            duration_ms: 50.0,
            samples: 96,
            recalibrate: true,
        }
    }
}

/// Rewrites a module-level validation error under a config field path.
fn under(prefix: &str, err: Error) -> Error {
    match err {
        Error::InvalidParameter { name, reason } => Error::config(format!("{prefix}.{name}"), reason),
        Error::Config { field, reason } => Error::config(format!("{prefix}.{field}"), reason),
        other => Error::config(prefix, other.to_string()),
    }
}

fn check(ok: bool, field: &str, reason: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, reason))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "<root>".to_string() } else { path };
            Error::config(field, e.into_inner().message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Checks every field against the owning module's invariants.
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        check(d.classes >= 2, "data.classes", "need at least 2 classes")?;
        match d.source {
            DataSource::Toy => {
                check(d.train_per_class > 0, "data.train_per_class", "must be positive")?;
                check(d.test_per_class > 0, "data.test_per_class", "must be positive")?;
                check(d.feature_dim > 0, "data.feature_dim", "must be positive")?;
                check(
                    d.separation.is_finite() && d.separation >= 0.0,
                    "data.separation",
                    "must be finite and non-negative",
                )?;
            }
            DataSource::Idx => {
                for (field, v) in [
                    ("data.train_images", &d.train_images),
                    ("data.train_labels", &d.train_labels),
                    ("data.test_images", &d.test_images),
                    ("data.test_labels", &d.test_labels),
                ] {
                    check(v.is_some(), field, "required when data.source = \"idx\"")?;
                }
                check(d.train_limit != Some(0), "data.train_limit", "must be positive")?;
                check(d.test_limit != Some(0), "data.test_limit", "must be positive")?;
            }
        }

        let m = &self.model;
        DecayPair::new(m.dt_ms, m.tau_fast_ms, m.tau_slow_ms).map_err(|e| under("model", e))?;
        check(m.v_th > 0.0 && m.v_th.is_finite(), "model.v_th", "must be positive and finite")?;
        check(
            m.gamma_spread >= 0.0 && m.gamma_init - m.gamma_spread > 0.0 && m.gamma_init + m.gamma_spread < 1.0,
            "model.gamma_init",
            "gamma_init +/- gamma_spread must lie inside (0, 1)",
        )?;
        check(m.surrogate_slope > 0.0, "model.surrogate_slope", "must be positive")?;
        m.layer_specs(d.classes)?;

        let t = &self.training;
        check(t.lr > 0.0 && t.lr.is_finite(), "training.lr", "must be positive")?;
        check((0.0..1.0).contains(&t.beta1), "training.beta1", "must lie in [0, 1)")?;
        check((0.0..1.0).contains(&t.beta2), "training.beta2", "must lie in [0, 1)")?;
        check(t.eps > 0.0, "training.eps", "must be positive")?;
        check(t.batch_size > 0, "training.batch_size", "must be positive")?;
        check(t.eval_batch_size > 0, "training.eval_batch_size", "must be positive")?;
        self.loss_config().validate().map_err(|e| under("training", e))?;

        let c = &self.calibration;
        c.to_config().validate().map_err(|e| under("calibration", e))?;
        check(c.probe_batch_size > 0, "calibration.probe_batch_size", "must be positive")?;

        check(!self.tasks.is_empty(), "tasks", "need at least one task")?;
        for (i, task) in self.tasks.iter().enumerate() {
            let prefix = format!("tasks[{i}]");
            check(!task.name.is_empty(), &format!("{prefix}.name"), "must not be empty")?;
            check(task.epochs > 0, &format!("{prefix}.epochs"), "must be positive")?;
            if self.tasks[..i].iter().any(|o| o.name == task.name) {
                return Err(Error::config(format!("{prefix}.name"), format!("duplicate task name `{}`", task.name)));
            }
            self.task_encoding(i).validate().map_err(|e| under(&prefix, e))?;
        }

        let x = &self.exposure;
        check(x.samples > 0, "exposure.samples", "must be positive")?;
        self.exposure_encoding().validate().map_err(|e| under("exposure", e))?;
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda_var: self.training.lambda_var,
            mu_star: self.training.mu_star,
            sigma_star: self.training.sigma_star,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            adam: AdamConfig {
                lr: t.lr,
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
            },
            batch_size: t.batch_size,
            eval_batch_size: t.eval_batch_size,
            loss: self.loss_config(),
            seed: self.seed,
        }
    }

    /// Encoding of task `i`, used as-is for evaluation and reseeded per training epoch.
    pub fn task_encoding(&self, i: usize) -> EncodingSpec {
        let task = &self.tasks[i];
        EncodingSpec {
            frequency_hz: task.frequency_hz,
            dt_ms: self.model.dt_ms,
            duration_ms: task.duration_ms,
            max_rate_hz: task.frequency_hz,
            scheme: EncodingScheme::BernoulliRate,
            seed: task.seed.unwrap_or_else(|| mix_seed(self.seed, 100 + i as u64)),
        }
    }

    pub fn exposure_encoding(&self) -> EncodingSpec {
        EncodingSpec {
            frequency_hz: self.exposure.frequency_hz,
            dt_ms: self.model.dt_ms,
            duration_ms: self.exposure.duration_ms,
            max_rate_hz: self.exposure.frequency_hz,
            scheme: EncodingScheme::BernoulliRate,
            seed: mix_seed(self.seed, 99),
        }
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
