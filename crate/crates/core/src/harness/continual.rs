use std::collections::BTreeMap;

use super::exposure::unsupervised_exposure_eval;
use super::gates::{gate_analysis, DEFAULT_BINS};
use super::metrics::{summarize, trajectory, ContinualMetrics, DomainSpikes, GateStage};
use super::tasks::{build_tasks, TaskData};
use crate::calibration::{calibrate, CalibrationReport};
use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::data::{encode, ImageDataset, SpikeTrainBatch};
use crate::error::Result;
use crate::network::Network;
use crate::rng::mix_seed;
use crate::train::{train_task, EpochRecord, EvalSet, TrainObserver, TrainRecord};

/// Which dataset splits each task's training loop read from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PurityLog {
    /// `(task, split) -> samples drawn`.
    pub reads: BTreeMap<(String, String), usize>,
}

impl PurityLog {
    /// Splits touched while training `task`.
    pub fn splits_for(&self, task: &str) -> Vec<&str> {
        self.reads
            .keys()
            .filter(|(t, _)| t == task)
            .map(|(_, s)| s.as_str())
            .collect()
    }
}

impl TrainObserver for PurityLog {
    fn on_batch(&mut self, task: &str, data: &ImageDataset, indices: &[usize]) {
        *self.reads.entry((task.to_string(), data.split.clone())).or_default() += indices.len();
    }

    fn on_epoch(&mut self, _task: &str, _record: &EpochRecord, _net: &Network) -> Result<()> {
        Ok(())
    }
}

/// Everything one continual run produces.
#[derive(Clone, Debug)]
pub struct ContinualRun {
    pub metrics: ContinualMetrics,
    pub records: Vec<TrainRecord>,
    pub calibration: Option<CalibrationReport>,
    /// Checkpoint after each task, keyed by task name.
    pub checkpoints: Vec<(String, Checkpoint)>,
    pub network: Network,
    pub purity: PurityLog,
}

/// Calibration probe: uniform-noise images shaped like the first task's
/// data, encoded at that task's frequency with a fixed seed.
pub fn probe_batches(cfg: &ExperimentConfig, first: &TaskData) -> Result<Vec<SpikeTrainBatch>> {
    let c = &cfg.calibration;
    let noise = first.train.noise_like(c.probe_batches * c.probe_batch_size, mix_seed(cfg.seed, 7));
    let spec = first.encoding.reseeded(u64::MAX);
    (0..c.probe_batches)
        .map(|b| {
            let idx: Vec<usize> = (b * c.probe_batch_size..(b + 1) * c.probe_batch_size).collect();
            encode(&noise, &spec, &idx)
        })
        .collect()
}

pub fn build_network(cfg: &ExperimentConfig, tasks: &[TaskData]) -> Result<Network> {
    let specs = cfg.model.layer_specs(cfg.data.classes)?;
    Network::build(
        tasks[0].input_shape(),
        &specs,
        &cfg.model.neuron_settings(),
        cfg.model.mode,
        cfg.seed,
    )
}

/// Calibrates on the first task, trains each task in order from the current
/// weights (no replay, no freezing, fresh optimizer state per task) and
/// evaluates every task's test set after every epoch.
pub fn run_continual(cfg: &ExperimentConfig, label: &str) -> Result<ContinualRun> {
    cfg.validate()?;
    let tasks = build_tasks(cfg)?;
    let mut net = build_network(cfg, &tasks)?;

    let calibration = if cfg.calibration.enabled {
        let probe = probe_batches(cfg, &tasks[0])?;
        Some(calibrate(&mut net, &probe, &cfg.calibration.to_config())?)
    } else {
        None
    };

    let train_cfg = cfg.train_config();
    let names: Vec<String> = tasks.iter().map(|t| t.name.clone()).collect();
    let evals: Vec<EvalSet<'_>> = tasks
        .iter()
        .map(|t| EvalSet {
            name: &t.name,
            data: &t.test,
            encoding: &t.encoding,
        })
        .collect();

    let mut gates = vec![GateStage {
        stage: "init".into(),
        layers: gate_analysis(&net, DEFAULT_BINS),
    }];
    let mut purity = PurityLog::default();
    let mut records = Vec::with_capacity(tasks.len());
    let mut checkpoints = Vec::with_capacity(tasks.len());
    let mut exposure = None;
    let hash = cfg.hash();

    for (i, task) in tasks.iter().enumerate() {
        let record = train_task(
            &mut net,
            &task.name,
            &task.train,
            &task.encoding,
            task.epochs,
            &train_cfg,
            &evals,
            &mut purity,
        )?;
        gates.push(GateStage {
            stage: format!("after:{}", task.name),
            layers: gate_analysis(&net, DEFAULT_BINS),
        });
        checkpoints.push((
            task.name.clone(),
            Checkpoint::capture(&net, record.optimizer.as_ref(), &hash).with_position(i as u64, task.epochs as u64),
        ));
        records.push(record);

        if i == 0 && cfg.exposure.enabled {
            exposure = Some(exposure_after_first_task(cfg, &net, tasks.last().expect("at least one task"))?);
        }
    }

    let traj = trajectory(&records, tasks.len())?;
    let s = summarize(&traj, &names)?;
    let last = records.last().and_then(|r| r.epochs.last()).expect("at least one epoch");
    let unit_rate_std = last.evals.iter().map(|e| e.unit_rate_std).sum::<f64>() / last.evals.len() as f64;
    let final_spikes = last
        .evals
        .iter()
        .map(|e| DomainSpikes {
            domain: e.name.clone(),
            samples: e.samples,
            spikes: e.spikes,
            spikes_per_inference: e.spikes_per_inference(),
        })
        .collect();

    let metrics = ContinualMetrics {
        label: label.to_string(),
        seed: cfg.seed,
        tasks: names,
        final_combined_acc: s.final_combined_acc,
        final_task_accs: s.final_task_accs,
        task_a_peak_acc: s.task_a_peak_acc,
        task_a_final_acc: s.task_a_final_acc,
        forgetting: s.forgetting,
        task_b_final_acc: s.task_b_final_acc,
        convergence_epochs_task_b: s.convergence_epochs_task_b,
        trajectory: traj,
        unit_rate_std,
        final_spikes,
        spike_ratios: Vec::new(),
        gates,
        exposure,
    };
    Ok(ContinualRun {
        metrics,
        records,
        calibration,
        checkpoints,
        network: net,
        purity,
    })
}

/// Unlabelled stream from the last task's training images and a test stream
/// from its test images, both at the exposure frequency.
fn exposure_after_first_task(
    cfg: &ExperimentConfig,
    net: &Network,
    target: &TaskData,
) -> Result<super::metrics::ExposureResult> {
    let spec = cfg.exposure_encoding();
    let stream_spec = spec.reseeded(1);
    let n = cfg.exposure.samples.min(target.train.len());
    let batch = cfg.calibration.probe_batch_size;
    let stream = (0..n)
        .collect::<Vec<_>>()
        .chunks(batch)
        .map(|idx| encode(&target.train, &stream_spec, idx))
        .collect::<Result<Vec<_>>>()?;
    let set = EvalSet {
        name: &target.name,
        data: &target.test,
        encoding: &spec,
    };
    let recal = cfg.exposure.recalibrate.then(|| cfg.calibration.to_config());
    let (result, _) = unsupervised_exposure_eval(net, &stream, set, recal.as_ref(), cfg.training.eval_batch_size)?;
    Ok(result)
}
