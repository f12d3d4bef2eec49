//! Central finite-difference verification of [`backward`].
//!
//! The spike step is discontinuous, so the check is only meaningful in two
//! regimes: no unit gets near threshold (the surrogate is zero everywhere
//! and so is the true derivative), or the forward pass uses the clamped
//! linear spike function whose exact derivative is the surrogate.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::backward::{backward, Gradients};
use super::loss::{total_loss, LossConfig};
use crate::error::{Error, Result};
use crate::network::{ForwardOptions, Network, ParamId, Record};
use crate::neuron::SpikeFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradRegime {
    NoSpike,
    SurrogateSmoothed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub id: ParamId,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub regime: GradRegime,
    pub tolerance: f64,
    pub groups: Vec<GroupCheck>,
    pub passed: bool,
}

impl GradientReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    /// Compares two gradient sets elementwise with
    /// `|a - n| / max(|a|, |n|, 1e-8)`.
    pub fn compare(regime: GradRegime, analytic: &Gradients, numeric: &Gradients, tolerance: f64) -> Self {
        let groups: Vec<GroupCheck> = analytic
            .groups
            .iter()
            .zip(&numeric.groups)
            .map(|((id, a), (_, n))| {
                let max_rel_error = a
                    .iter()
                    .zip(n)
                    .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
                    .fold(0.0, f64::max);
                GroupCheck {
                    id: *id,
                    max_rel_error,
                    passed: max_rel_error <= tolerance,
                }
            })
            .collect();
        let passed = groups.iter().all(|g| g.passed);
        Self {
            regime,
            tolerance,
            groups,
            passed,
        }
    }
}

impl GradRegime {
    pub fn spike_fn(self, slope: f64) -> SpikeFunction {
        match self {
            GradRegime::NoSpike => SpikeFunction::Heaviside,
            GradRegime::SurrogateSmoothed => SpikeFunction::ClampedLinear { slope },
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn loss_at(
    net: &Network,
    input: ArrayView2<f64>,
    batch: usize,
    steps: usize,
    labels: &[usize],
    cfg: &LossConfig,
    spike_fn: SpikeFunction,
) -> Result<f64> {
    let trace = net.forward_rows(
        input,
        batch,
        steps,
        ForwardOptions {
            record: Record::Spikes,
            spike_fn,
        },
    )?;
    Ok(total_loss(&trace, labels, cfg)?.total)
}

/// Central differences of the total loss for every parameter.
#[allow(clippy::too_many_arguments)]
pub fn numeric_gradients(
    net: &Network,
    input: ArrayView2<f64>,
    batch: usize,
    steps: usize,
    labels: &[usize],
    cfg: &LossConfig,
    spike_fn: SpikeFunction,
    epsilon: f64,
) -> Result<Gradients> {
    let mut probe = net.clone();
    let mut grads = Gradients::zeros_like(net);
    let frozen = net.mode.frozen_gate().is_some();
    for (k, (id, g)) in grads.groups.iter_mut().enumerate() {
        if frozen && id.kind == crate::network::ParamKind::Gate {
            continue;
        }
        for i in 0..g.len() {
            let original = probe.params()[k].1[i];
            probe.params_mut()[k].1[i] = original + epsilon;
            let up = loss_at(&probe, input, batch, steps, labels, cfg, spike_fn)?;
            probe.params_mut()[k].1[i] = original - epsilon;
            let down = loss_at(&probe, input, batch, steps, labels, cfg, spike_fn)?;
            probe.params_mut()[k].1[i] = original;
            g[i] = (up - down) / (2.0 * epsilon);
        }
    }
    Ok(grads)
}

#[allow(clippy::too_many_arguments)]
pub fn gradcheck(
    net: &Network,
    input: ArrayView2<f64>,
    batch: usize,
    steps: usize,
    labels: &[usize],
    cfg: &LossConfig,
    regime: GradRegime,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradientReport> {
    let spike_fn = regime.spike_fn(net.surrogate_slope);
    let analytic = backward(net, input, batch, steps, labels, cfg, spike_fn)?;
    if regime == GradRegime::NoSpike && analytic.trace.total_spikes() > 0 {
        return Err(Error::invalid(
            "regime",
            format!("no-spike check requested but {} spikes occurred", analytic.trace.total_spikes()),
        ));
    }
    let numeric = numeric_gradients(net, input, batch, steps, labels, cfg, spike_fn, epsilon)?;
    Ok(GradientReport::compare(regime, &analytic.grads, &numeric, tolerance))
}
