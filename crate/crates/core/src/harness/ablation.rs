use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::continual::{run_continual, ContinualRun};
use super::metrics::{ContinualMetrics, SpikeRatio};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::network::{spike_count_ratio, NetworkMode};

/// One row of the ablation table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ltgate,
    SingleFast,
    SingleSlow,
    NoVarReg,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Ltgate, Variant::SingleFast, Variant::SingleSlow, Variant::NoVarReg];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ltgate => "ltgate",
            Variant::SingleFast => "single_fast",
            Variant::SingleSlow => "single_slow",
            Variant::NoVarReg => "no_var_reg",
        }
    }

    /// The base config with this variant's mode and regularizer applied.
    pub fn apply(self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Ltgate => cfg.model.mode = NetworkMode::Ltgate,
            Variant::SingleFast => cfg.model.mode = NetworkMode::SingleFast,
            Variant::SingleSlow => cfg.model.mode = NetworkMode::SingleSlow,
            Variant::NoVarReg => {
                cfg.model.mode = NetworkMode::Ltgate;
                cfg.training.lambda_var = 0.0;
            }
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config("mode", format!("unknown mode `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub metrics: ContinualMetrics,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn get(&self, variant: Variant, seed: u64) -> Option<&ContinualMetrics> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.seed == seed)
            .map(|r| &r.metrics)
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Seeds for which `pred(metrics of a, metrics of b)` holds, and the seed count.
    pub fn count_seeds(
        &self,
        a: Variant,
        b: Variant,
        pred: impl Fn(&ContinualMetrics, &ContinualMetrics) -> bool,
    ) -> (usize, usize) {
        let seeds = self.seeds();
        let hits = seeds
            .iter()
            .filter(|&&s| match (self.get(a, s), self.get(b, s)) {
                (Some(x), Some(y)) => pred(x, y),
                _ => false,
            })
            .count();
        (hits, seeds.len())
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
        let domains: Vec<String> = self
            .rows
            .first()
            .map(|r| r.metrics.tasks.clone())
            .unwrap_or_default();
        let mut header: Vec<String> = [
            "variant",
            "seed",
            "final_combined_acc",
            "task_a_peak_acc",
            "task_a_final_acc",
            "forgetting",
            "task_b_final_acc",
            "convergence_epochs_task_b",
            "unit_rate_std",
            "exposure_accuracy",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for d in &domains {
            header.push(format!("spikes_per_inference_{d}"));
            header.push(format!("spike_ratio_{d}"));
        }
        w.write_record(&header)?;
        for row in &self.rows {
            let m = &row.metrics;
            let mut rec = vec![
                row.variant.to_string(),
                row.seed.to_string(),
                m.final_combined_acc.to_string(),
                m.task_a_peak_acc.to_string(),
                m.task_a_final_acc.to_string(),
                m.forgetting.to_string(),
                m.task_b_final_acc.to_string(),
                m.convergence_epochs_task_b.to_string(),
                m.unit_rate_std.to_string(),
                m.exposure.as_ref().map_or(String::new(), |e| e.accuracy.to_string()),
            ];
            for d in &domains {
                rec.push(
                    m.final_spikes
                        .iter()
                        .find(|s| &s.domain == d)
                        .map_or(String::new(), |s| s.spikes_per_inference.to_string()),
                );
                rec.push(
                    m.spike_ratios
                        .iter()
                        .find(|s| &s.domain == d)
                        .map_or(String::new(), |s| s.ratio.to_string()),
                );
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Spike ratios of `run` against `baseline` per domain, from their final
/// evaluations. Domains where the baseline is silent have no defined ratio
/// and are left out.
pub fn spike_ratios(run: &ContinualMetrics, baseline: &ContinualMetrics) -> Vec<SpikeRatio> {
    run.final_spikes
        .iter()
        .filter_map(|s| {
            let b = baseline.final_spikes.iter().find(|b| b.domain == s.domain)?;
            Some(SpikeRatio {
                domain: s.domain.clone(),
                spikes: s.spikes,
                baseline_spikes: b.spikes,
                ratio: spike_count_ratio(s.spikes, b.spikes).ok()?,
            })
        })
        .collect()
}

/// Runs every `(variant, seed)` cell in parallel, then fills spike ratios
/// against the `single_fast` cell of the same seed.
pub fn ablation_suite(base: &ExperimentConfig, seeds: &[u64], variants: &[Variant]) -> Result<(AblationTable, Vec<ContinualRun>)> {
    let cells: Vec<(Variant, u64)> = seeds
        .iter()
        .flat_map(|&s| variants.iter().map(move |&v| (v, s)))
        .collect();
    let runs = cells
        .par_iter()
        .map(|&(v, seed)| {
            let mut cfg = v.apply(base);
            cfg.seed = seed;
            run_continual(&cfg, v.name())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = AblationTable {
        rows: cells
            .iter()
            .zip(&runs)
            .map(|(&(variant, seed), run)| AblationRow {
                variant,
                seed,
                metrics: run.metrics.clone(),
            })
            .collect(),
    };
    for i in 0..table.rows.len() {
        let seed = table.rows[i].seed;
        let Some(base_metrics) = table.get(Variant::SingleFast, seed).cloned() else {
            continue;
        };
        table.rows[i].metrics.spike_ratios = spike_ratios(&table.rows[i].metrics, &base_metrics);
    }
    Ok((table, runs))
}
