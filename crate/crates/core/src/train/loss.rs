use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ForwardTrace;

/// Weights and targets of the homeostatic firing regularizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_var: f64,
    /// Target fraction of time steps with a spike.
    pub mu_star: f64,
    /// Target standard deviation of the per-slot spike indicator.
    pub sigma_star: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_var: 0.01,
            mu_star: 0.02,
            sigma_star: 0.015,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_var >= 0.0) {
            return Err(Error::invalid("lambda_var", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.mu_star) {
            return Err(Error::invalid("mu_star", "must lie in [0, 1]"));
        }
        if !(self.sigma_star >= 0.0) {
            return Err(Error::invalid("sigma_star", "must be non-negative"));
        }
        Ok(())
    }
}

/// Per-unit mean and population standard deviation of the spike indicator,
/// pooled over batch and time.
#[derive(Clone, Debug, PartialEq)]
pub struct FiringStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

pub fn firing_stats(trace: &ForwardTrace, layer: usize) -> Result<FiringStats> {
    let spikes = &trace.layers.get(layer).ok_or(Error::MissingRaster(layer))?.spikes;
    let n = spikes.nrows().max(1) as f64;
    let mu: Vec<f64> = spikes.columns().into_iter().map(|c| c.sum() / n).collect();
    let sigma = spikes
        .columns()
        .into_iter()
        .zip(&mu)
        .map(|(c, &m)| (c.iter().map(|&s| (s - m) * (s - m)).sum::<f64>() / n).sqrt())
        .collect();
    Ok(FiringStats { mu, sigma })
}

/// `lambda * sum_i (mu_i - mu*)^2 + (sigma_i - sigma*)^2` over every unit of every given layer.
pub fn variance_loss(stats: &[FiringStats], cfg: &LossConfig) -> f64 {
    if cfg.lambda_var == 0.0 {
        return 0.0;
    }
    let sum: f64 = stats
        .iter()
        .flat_map(|s| s.mu.iter().zip(&s.sigma))
        .map(|(&m, &s)| (m - cfg.mu_star).powi(2) + (s - cfg.sigma_star).powi(2))
        .sum();
    cfg.lambda_var * sum
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (batch, classes) = logits.dim();
    if labels.len() != batch {
        return Err(Error::shape("labels", batch, labels.len()));
    }
    let mut grad = Array2::<f64>::zeros((batch, classes));
    let mut total = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let row = logits.row(b);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_denom = denom.ln() + max;
        total += log_denom - row[label];
        for (c, g) in grad.row_mut(b).iter_mut().enumerate() {
            let p = (row[c] - log_denom).exp();
            *g = (p - if c == label { 1.0 } else { 0.0 }) / batch as f64;
        }
    }
    Ok((total / batch.max(1) as f64, grad))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cross_entropy: f64,
    pub variance: f64,
    pub total: f64,
}

/// Hidden-layer firing statistics (every layer but the readout).
pub fn hidden_stats(trace: &ForwardTrace) -> Result<Vec<FiringStats>> {
    (0..trace.layers.len().saturating_sub(1))
        .map(|l| firing_stats(trace, l))
        .collect()
}

pub fn total_loss(trace: &ForwardTrace, labels: &[usize], cfg: &LossConfig) -> Result<LossBreakdown> {
    let (ce, _) = cross_entropy(&trace.output, labels)?;
    let var = variance_loss(&hidden_stats(trace)?, cfg);
    Ok(LossBreakdown {
        cross_entropy: ce,
        variance: var,
        total: ce + var,
    })
}
