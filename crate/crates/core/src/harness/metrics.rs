use serde::{Deserialize, Serialize};

use super::gates::GateHistogram;
use crate::error::{Error, Result};
use crate::train::TrainRecord;

/// Test accuracies after one training epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub task: String,
    /// 1-based epoch within the task.
    pub epoch: usize,
    /// 1-based epoch over the whole schedule.
    pub global_epoch: usize,
    /// One entry per task test set, in schedule order.
    pub accuracies: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpikes {
    pub domain: String,
    pub samples: usize,
    pub spikes: u64,
    pub spikes_per_inference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeRatio {
    pub domain: String,
    pub spikes: u64,
    pub baseline_spikes: u64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateStage {
    /// `init`, or `after:<task>`.
    pub stage: String,
    pub layers: Vec<GateHistogram>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExposureResult {
    pub frequency_hz: f64,
    pub recalibrated: bool,
    /// Spikes emitted while the exposure stream ran through the frozen network.
    pub exposure_spikes: u64,
    /// Accuracy on the exposure-frequency test stream before any exposure.
    pub zero_shot_accuracy: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinualMetrics {
    pub label: String,
    pub seed: u64,
    pub tasks: Vec<String>,
    pub final_combined_acc: f64,
    pub final_task_accs: Vec<f64>,
    pub task_a_peak_acc: f64,
    pub task_a_final_acc: f64,
    /// Percentage points.
    pub forgetting: f64,
    pub task_b_final_acc: f64,
    pub convergence_epochs_task_b: usize,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Standard deviation across hidden units of their firing rate, averaged over the final test sets.
    pub unit_rate_std: f64,
    pub final_spikes: Vec<DomainSpikes>,
    /// Filled when the run is compared with a baseline.
    pub spike_ratios: Vec<SpikeRatio>,
    pub gates: Vec<GateStage>,
    pub exposure: Option<ExposureResult>,
}

/// `peak - final` in percentage points, peak taken over the whole curve.
pub fn forgetting_points(curve: &[f64]) -> f64 {
    match curve.last() {
        None => 0.0,
        Some(&last) => {
            let peak = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (peak - last) * 100.0
        }
    }
}

/// First 1-based epoch whose accuracy reaches 90% of the final one.
pub fn convergence_epoch(curve: &[f64]) -> usize {
    let Some(&last) = curve.last() else {
        return 0;
    };
    let target = 0.9 * last;
    curve.iter().position(|&a| a >= target).map_or(curve.len(), |i| i + 1)
}

/// Equal-weight mean over test sets.
pub fn combined_accuracy(accs: &[f64]) -> f64 {
    if accs.is_empty() {
        0.0
    } else {
        accs.iter().sum::<f64>() / accs.len() as f64
    }
}

/// Builds the trajectory from per-task training records. Every epoch must
/// have evaluated every task's test set, in schedule order.
pub fn trajectory(records: &[TrainRecord], tasks: usize) -> Result<Vec<TrajectoryPoint>> {
    let mut out = Vec::new();
    let mut global = 0;
    for rec in records {
        for ep in &rec.epochs {
            global += 1;
            if ep.evals.len() != tasks {
                return Err(Error::shape("evaluations per epoch", tasks, ep.evals.len()));
            }
            out.push(TrajectoryPoint {
                task: rec.task.clone(),
                epoch: ep.epoch,
                global_epoch: global,
                accuracies: ep.evals.iter().map(|e| e.accuracy).collect(),
            });
        }
    }
    Ok(out)
}

/// Accuracy-derived fields of [`ContinualMetrics`] from a trajectory.
pub struct AccuracySummary {
    pub final_task_accs: Vec<f64>,
    pub final_combined_acc: f64,
    pub task_a_peak_acc: f64,
    pub task_a_final_acc: f64,
    pub forgetting: f64,
    pub task_b_final_acc: f64,
    pub convergence_epochs_task_b: usize,
}

pub fn summarize(traj: &[TrajectoryPoint], tasks: &[String]) -> Result<AccuracySummary> {
    let last = traj.last().ok_or_else(|| Error::invalid("trajectory", "no epochs recorded"))?;
    // with a single task nothing comes after it, so only its final value counts
    let task_a: Vec<f64> = if tasks.len() == 1 {
        vec![last.accuracies[0]]
    } else {
        traj.iter().map(|p| p.accuracies[0]).collect()
    };
    let b = tasks.len() - 1;
    let task_b_name = &tasks[b];
    let task_b_curve: Vec<f64> = traj
        .iter()
        .filter(|p| &p.task == task_b_name)
        .map(|p| p.accuracies[b])
        .collect();
    let peak = task_a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(AccuracySummary {
        final_task_accs: last.accuracies.clone(),
        final_combined_acc: combined_accuracy(&last.accuracies),
        task_a_peak_acc: peak,
        task_a_final_acc: last.accuracies[0],
        forgetting: forgetting_points(&task_a),
        task_b_final_acc: last.accuracies[b],
        convergence_epochs_task_b: convergence_epoch(&task_b_curve),
    })
}
