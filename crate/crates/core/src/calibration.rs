//! Per-layer threshold calibration by bisection on the probe firing rate.
//!
//! Layers are calibrated front to back: once a layer's threshold is set,
//! its spikes on the probe set become the fixed input of the next layer.
//! The search runs geometrically over `[v_lo, v_hi]` because useful
//! thresholds span several orders of magnitude.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::SpikeTrainBatch;
use crate::error::{Error, Result};
use crate::network::{ForwardOptions, Network};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub target_rate: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub max_iters: usize,
    pub probe_batches: usize,
    pub v_lo: f64,
    pub v_hi: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            target_rate: 0.02,
            band_lo: 0.015,
            band_hi: 0.025,
            max_iters: 30,
            probe_batches: 3,
            v_lo: 1e-3,
            v_hi: 1e3,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.band_lo && self.band_lo <= self.target_rate && self.target_rate <= self.band_hi && self.band_hi < 1.0)
        {
            return Err(Error::invalid("band", "need 0 < band_lo <= target_rate <= band_hi < 1"));
        }
        if !(0.0 < self.v_lo && self.v_lo < self.v_hi) {
            return Err(Error::invalid("v_lo", "need 0 < v_lo < v_hi"));
        }
        if self.probe_batches == 0 {
            return Err(Error::invalid("probe_batches", "must be positive"));
        }
        Ok(())
    }

    fn in_band(&self, rate: f64) -> bool {
        self.band_lo <= rate && rate <= self.band_hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCalibration {
    pub layer: usize,
    pub v_th: f64,
    pub rate: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Measured rate never increased with the threshold during the search.
    pub monotone: bool,
    /// Width of the bracket `[lo, hi]` when the search stopped.
    pub final_interval: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub layers: Vec<LayerCalibration>,
}

impl CalibrationReport {
    pub fn all_converged(&self) -> bool {
        self.layers.iter().all(|l| l.converged)
    }
}

/// Spike fraction of `layer` over units, time and every probe batch.
pub fn measure_rate(net: &Network, probe: &[SpikeTrainBatch], layer: usize) -> Result<f64> {
    if layer >= net.layers.len() {
        return Err(Error::MissingRaster(layer));
    }
    let (mut spikes, mut slots) = (0u64, 0usize);
    for batch in probe {
        let trace = net.forward(batch, crate::network::Record::Spikes)?;
        spikes += trace.layers[layer].total_spikes;
        slots += trace.layers[layer].spikes.len();
    }
    Ok(if slots == 0 { 0.0 } else { spikes as f64 / slots as f64 })
}

/// Rate of one layer given its already-computed input rows for each probe batch.
fn layer_rate(net: &Network, layer: usize, inputs: &[(Array2<f64>, usize, usize)]) -> Result<f64> {
    let l = &net.layers[layer];
    let gates = l.gates(net.mode);
    let (mut spikes, mut slots) = (0u64, 0usize);
    for (x, batch, steps) in inputs {
        let t = l.simulate(x.view(), *batch, *steps, &gates, ForwardOptions::default(), None)?;
        spikes += t.total_spikes;
        slots += t.spikes.len();
    }
    Ok(if slots == 0 { 0.0 } else { spikes as f64 / slots as f64 })
}

/// Sets each layer's threshold so its probe rate lands in the band.
///
/// Only the first `cfg.probe_batches` batches of `probe` are used.
pub fn calibrate(net: &mut Network, probe: &[SpikeTrainBatch], cfg: &CalibrationConfig) -> Result<CalibrationReport> {
    cfg.validate()?;
    let probe = &probe[..cfg.probe_batches.min(probe.len())];
    if probe.is_empty() {
        return Err(Error::invalid("probe_batches", "no probe data"));
    }
    let mut inputs: Vec<(Array2<f64>, usize, usize)> =
        probe.iter().map(|b| (b.to_rows(), b.batch(), b.steps())).collect();
    let mut report = CalibrationReport::default();

    for layer in 0..net.layers.len() {
        let rate_at = |net: &mut Network, v: f64| -> Result<f64> {
            net.layers[layer].threshold.v_th = v;
            layer_rate(net, layer, &inputs)
        };
        let start = net.layers[layer].threshold.v_th;
        let mut seen: Vec<(f64, f64)> = Vec::new();
        let start_rate = rate_at(net, start)?;
        seen.push((start, start_rate));

        let mut result = LayerCalibration {
            layer,
            v_th: start,
            rate: start_rate,
            iterations: 0,
            converged: cfg.in_band(start_rate),
            monotone: true,
            final_interval: 0.0,
        };
        if !result.converged {
            let rate_lo = rate_at(net, cfg.v_lo)?;
            if rate_lo < cfg.band_lo {
                net.layers[layer].threshold.v_th = start;
                return Err(Error::UnreachableTarget {
                    layer,
                    rate: rate_lo,
                    v_lo: cfg.v_lo,
                });
            }
            seen.push((cfg.v_lo, rate_lo));
            let (mut lo, mut hi) = (cfg.v_lo, cfg.v_hi);
            while result.iterations < cfg.max_iters {
                let mid = (lo * hi).sqrt();
                let r = rate_at(net, mid)?;
                result.iterations += 1;
                seen.push((mid, r));
                if cfg.in_band(r) {
                    result.v_th = mid;
                    result.rate = r;
                    result.converged = true;
                    break;
                }
                if r > cfg.band_hi {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            result.final_interval = hi - lo;
            if !result.converged {
                // best seen, closest to target
                let (v, r) = seen
                    .iter()
                    .copied()
                    .min_by(|a, b| (a.1 - cfg.target_rate).abs().total_cmp(&(b.1 - cfg.target_rate).abs()))
                    .expect("at least one probe");
                result.v_th = v;
                result.rate = r;
            }
        }
        let mut sorted = seen.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        result.monotone = sorted.windows(2).all(|w| w[1].1 <= w[0].1);
        net.layers[layer].threshold.v_th = result.v_th;

        // this layer's spikes feed the next one
        if layer + 1 < net.layers.len() {
            let l = &net.layers[layer];
            let gates = l.gates(net.mode);
            for entry in inputs.iter_mut() {
                let t = l.simulate(entry.0.view(), entry.1, entry.2, &gates, ForwardOptions::default(), None)?;
                entry.0 = t.spikes;
            }
        }
        report.layers.push(result);
    }
    Ok(report)
}
