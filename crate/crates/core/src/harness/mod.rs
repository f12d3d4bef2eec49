//! The fast-to-slow continual-learning protocol, its metrics, ablations,
//! gate analysis and the unsupervised exposure evaluation.

mod ablation;
mod artifacts;
mod continual;
mod exposure;
mod gates;
mod metrics;
mod tasks;

pub use ablation::{ablation_suite, spike_ratios, AblationRow, AblationTable, Variant};
pub use artifacts::{create_dir, write_gate_csvs, write_json, write_metrics_csv, write_run, RunManifest};
pub use continual::{build_network, probe_batches, run_continual, ContinualRun, PurityLog};
pub use exposure::unsupervised_exposure_eval;
pub use gates::{gate_analysis, GateHistogram, DEFAULT_BINS};
pub use metrics::{
    combined_accuracy, convergence_epoch, forgetting_points, summarize, trajectory, AccuracySummary,
    ContinualMetrics, DomainSpikes, ExposureResult, GateStage, SpikeRatio, TrajectoryPoint,
};
pub use tasks::{build_tasks, TaskData};

use crate::error::{Error, Result};

/// Worker pool sized by `LTGATE_THREADS` when set, else by rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("LTGATE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::config("LTGATE_THREADS", format!("expected a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Format(e.to_string()))
}
