//! The dual-compartment gated LIF neuron.
//!
//! Each neuron carries a fast and a slow leaky membrane driven by the same
//! input current. A per-neuron (or per-channel) gate `gamma` blends the two
//! into the effective membrane that is compared against the threshold. On a
//! spike both compartments are lowered by the threshold (soft subtractive
//! reset), so the effective membrane drops by exactly `v_th`.
//!
//! Everything here operates in place on slices so the network's time loop
//! can reuse buffers; the neuron math itself lives only in this module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `exp(-dt / tau)`, the per-step retention of a leaky membrane.
pub fn decay_factor(dt_ms: f64, tau_ms: f64) -> Result<f64> {
    if !(dt_ms > 0.0 && dt_ms.is_finite()) {
        return Err(Error::invalid("dt_ms", format!("must be positive, got {dt_ms}")));
    }
    if !(tau_ms > 0.0 && tau_ms.is_finite()) {
        return Err(Error::invalid("tau_ms", format!("must be positive, got {tau_ms}")));
    }
    Ok((-dt_ms / tau_ms).exp())
}

/// Fast and slow decay factors with the time constants they came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayPair {
    pub dt_ms: f64,
    pub tau_fast_ms: f64,
    pub tau_slow_ms: f64,
    pub rho_fast: f64,
    pub rho_slow: f64,
}

impl DecayPair {
    pub fn new(dt_ms: f64, tau_fast_ms: f64, tau_slow_ms: f64) -> Result<Self> {
        let rho_fast = decay_factor(dt_ms, tau_fast_ms)?;
        let rho_slow = decay_factor(dt_ms, tau_slow_ms)?;
        if tau_fast_ms >= tau_slow_ms {
            return Err(Error::invalid(
                "tau_fast_ms",
                format!("must be below tau_slow_ms ({tau_fast_ms} >= {tau_slow_ms})"),
            ));
        }
        Ok(Self {
            dt_ms,
            tau_fast_ms,
            tau_slow_ms,
            rho_fast,
            rho_slow,
        })
    }

    /// Builds a pair directly from decay factors with `dt = 1`, recovering the
    /// time constants as `-1 / ln(rho)`.
    pub fn from_factors(rho_fast: f64, rho_slow: f64) -> Result<Self> {
        for (name, rho) in [("rho_fast", rho_fast), ("rho_slow", rho_slow)] {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::invalid(name, format!("must lie in (0, 1), got {rho}")));
            }
        }
        if rho_fast >= rho_slow {
            return Err(Error::invalid(
                "rho_fast",
                format!("must be below rho_slow ({rho_fast} >= {rho_slow})"),
            ));
        }
        Ok(Self {
            dt_ms: 1.0,
            tau_fast_ms: -1.0 / rho_fast.ln(),
            tau_slow_ms: -1.0 / rho_slow.ln(),
            rho_fast,
            rho_slow,
        })
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Gate values `gamma = logistic(raw)`, one per neuron or one per channel.
///
/// `raw = -inf` and `raw = +inf` give exactly 0 and 1, which is how the
/// single-timescale modes pin the gate.
#[derive(Clone, Debug, PartialEq)]
pub struct GateVector {
    pub raw: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl GateVector {
    pub fn from_raw(raw: Vec<f64>) -> Self {
        let gamma = raw.iter().map(|&r| logistic(r)).collect();
        Self { raw, gamma }
    }

    /// A gate fixed at `gamma` everywhere.
    pub fn constant(len: usize, gamma: f64) -> Self {
        let raw = if gamma <= 0.0 {
            f64::NEG_INFINITY
        } else if gamma >= 1.0 {
            f64::INFINITY
        } else {
            logit(gamma)
        };
        Self {
            raw: vec![raw; len],
            gamma: vec![gamma; len],
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// Number of consecutive units that share one gate when broadcast over
    /// `units` neurons (1 for dense layers, the spatial size for conv).
    pub fn group_size(&self, units: usize) -> Result<usize> {
        if self.gamma.is_empty() || units % self.gamma.len() != 0 {
            return Err(Error::shape(
                "gate broadcast",
                format!("a divisor of {units}"),
                self.gamma.len(),
            ));
        }
        Ok(units / self.gamma.len())
    }

    /// d gamma / d raw.
    pub fn slope(&self, i: usize) -> f64 {
        let g = self.gamma[i];
        g * (1.0 - g)
    }
}

/// Fast and slow membrane potentials for a group of neurons.
#[derive(Clone, Debug, PartialEq)]
pub struct CompartmentState {
    pub u_fast: Vec<f64>,
    pub u_slow: Vec<f64>,
}

impl CompartmentState {
    pub fn zeros(len: usize) -> Self {
        Self {
            u_fast: vec![0.0; len],
            u_slow: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.u_fast.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_fast.is_empty()
    }

    pub fn reset(&mut self) {
        self.u_fast.iter_mut().for_each(|v| *v = 0.0);
        self.u_slow.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.u_fast.iter().chain(&self.u_slow).all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeCondition {
    /// Spike when the gated membrane reaches threshold.
    #[default]
    Combined,
    /// Spike when either compartment reaches threshold.
    Either,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetMode {
    #[default]
    SoftSubtract,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub v_th: f64,
    pub reset_mode: ResetMode,
    pub spike_condition: SpikeCondition,
}

impl ThresholdConfig {
    pub fn new(v_th: f64) -> Result<Self> {
        if !(v_th > 0.0) {
            return Err(Error::invalid("v_th", format!("must be positive, got {v_th}")));
        }
        Ok(Self {
            v_th,
            reset_mode: ResetMode::SoftSubtract,
            spike_condition: SpikeCondition::Combined,
        })
    }

    pub fn with_condition(mut self, condition: SpikeCondition) -> Self {
        self.spike_condition = condition;
        self
    }
}

/// How the forward pass turns membrane into spikes.
///
/// `Heaviside` is the real spiking model. `ClampedLinear` replaces the step
/// by `clamp(slope * (u - v_th) + 1/2, 0, 1)`, the antiderivative of the
/// rectangular surrogate, which makes the whole forward pass piecewise
/// smooth so finite differences can check the backward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum SpikeFunction {
    #[default]
    Heaviside,
    ClampedLinear { slope: f64 },
}

impl SpikeFunction {
    #[inline]
    pub fn apply(self, u: f64, v_th: f64) -> f64 {
        match self {
            SpikeFunction::Heaviside => {
                if u >= v_th {
                    1.0
                } else {
                    0.0
                }
            }
            SpikeFunction::ClampedLinear { slope } => (slope * (u - v_th) + 0.5).clamp(0.0, 1.0),
        }
    }
}

/// Rectangular surrogate for d(spike)/dU: `slope` inside
/// `|u - v_th| <= 1 / (2 slope)`, zero outside.
#[inline]
pub fn surrogate_grad(u: f64, v_th: f64, slope: f64) -> f64 {
    if (u - v_th).abs() <= 0.5 / slope {
        slope
    } else {
        0.0
    }
}

pub fn surrogate_spike_grad(effective_u: &[f64], v_th: f64, slope: f64) -> Result<Vec<f64>> {
    if !(slope > 0.0) {
        return Err(Error::invalid("slope", format!("must be positive, got {slope}")));
    }
    Ok(effective_u.iter().map(|&u| surrogate_grad(u, v_th, slope)).collect())
}

/// Leaky integration of both compartments. No reset happens here.
pub fn lif_step(state: &mut CompartmentState, input_current: &[f64], decays: &DecayPair) -> Result<()> {
    if input_current.len() != state.len() || state.u_slow.len() != state.len() {
        return Err(Error::shape("lif_step", state.len(), input_current.len()));
    }
    let (rf, rs) = (decays.rho_fast, decays.rho_slow);
    for ((uf, us), &i) in state
        .u_fast
        .iter_mut()
        .zip(state.u_slow.iter_mut())
        .zip(input_current)
    {
        *uf = rf * *uf + i;
        *us = rs * *us + i;
    }
    Ok(())
}

/// `gamma * u_slow + (1 - gamma) * u_fast`, broadcasting each gate over its group.
pub fn gate_blend(state: &CompartmentState, gates: &GateVector) -> Result<Vec<f64>> {
    let group = gates.group_size(state.len())?;
    Ok(state
        .u_fast
        .iter()
        .zip(&state.u_slow)
        .enumerate()
        .map(|(i, (&uf, &us))| blend(gates.gamma[i / group], uf, us))
        .collect())
}

#[inline]
pub fn blend(gamma: f64, u_fast: f64, u_slow: f64) -> f64 {
    gamma * u_slow + (1.0 - gamma) * u_fast
}

/// Result of one threshold/reset pass.
#[derive(Clone, Debug, PartialEq)]
pub struct FireOutcome {
    pub spikes: Vec<f64>,
    /// Effective membrane before the reset was applied.
    pub effective_u: Vec<f64>,
}

pub fn fire_and_reset(
    state: &mut CompartmentState,
    gates: &GateVector,
    thr: &ThresholdConfig,
) -> Result<FireOutcome> {
    let mut spikes = vec![0.0; state.len()];
    let mut effective_u = vec![0.0; state.len()];
    fire_and_reset_into(state, gates, thr, SpikeFunction::Heaviside, &mut spikes, &mut effective_u)?;
    Ok(FireOutcome { spikes, effective_u })
}

/// Buffer-reusing form of [`fire_and_reset`] with a selectable spike function.
pub fn fire_and_reset_into(
    state: &mut CompartmentState,
    gates: &GateVector,
    thr: &ThresholdConfig,
    spike_fn: SpikeFunction,
    spikes: &mut [f64],
    effective_u: &mut [f64],
) -> Result<()> {
    let n = state.len();
    if spikes.len() != n || effective_u.len() != n {
        return Err(Error::shape("fire_and_reset", n, spikes.len().min(effective_u.len())));
    }
    let group = gates.group_size(n)?;
    let v_th = thr.v_th;
    for i in 0..n {
        let uf = state.u_fast[i];
        let us = state.u_slow[i];
        let u = blend(gates.gamma[i / group], uf, us);
        let driver = match thr.spike_condition {
            SpikeCondition::Combined => u,
            SpikeCondition::Either => uf.max(us),
        };
        let s = spike_fn.apply(driver, v_th);
        if s != 0.0 {
            state.u_fast[i] = uf - v_th * s;
            state.u_slow[i] = us - v_th * s;
        }
        spikes[i] = s;
        effective_u[i] = u;
    }
    Ok(())
}
