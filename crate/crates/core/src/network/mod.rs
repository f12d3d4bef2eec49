//! Layer stacks of gated dual-timescale neurons, unrolled over time.
//!
//! Every layer sees the spikes its predecessor emitted in the same time
//! step. Membrane state is zeroed at the start of each sequence. The
//! readout is the time-summed, pre-reset effective membrane of the last
//! layer.

mod synapse;

use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

pub use synapse::{conv_output_shape, LayerKind, Shape3};
pub(crate) use synapse::{backward as synapse_backward, currents as synapse_currents};

use crate::data::SpikeTrainBatch;
use crate::error::{Error, Result};
use crate::neuron::{
    fire_and_reset_into, lif_step, logit, CompartmentState, DecayPair, GateVector, SpikeCondition, SpikeFunction,
    ThresholdConfig,
};
use crate::rng::rng_for;

/// How the gates of every layer are treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkMode {
    /// Gates are learned.
    #[default]
    Ltgate,
    /// Gates pinned at 0: plain LIF with the fast decay.
    SingleFast,
    /// Gates pinned at 1: plain LIF with the slow decay.
    SingleSlow,
    /// Gates pinned at 0.5.
    GateFrozenHalf,
}

impl NetworkMode {
    pub fn name(self) -> &'static str {
        match self {
            NetworkMode::Ltgate => "ltgate",
            NetworkMode::SingleFast => "single_fast",
            NetworkMode::SingleSlow => "single_slow",
            NetworkMode::GateFrozenHalf => "gate_frozen_half",
        }
    }

    pub fn frozen_gate(self) -> Option<f64> {
        match self {
            NetworkMode::Ltgate => None,
            NetworkMode::SingleFast => Some(0.0),
            NetworkMode::SingleSlow => Some(1.0),
            NetworkMode::GateFrozenHalf => Some(0.5),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    #[default]
    MembraneSum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { units: usize },
    Conv2d { filters: usize, kernel: usize, stride: usize },
}

/// Neuron-level settings shared by every layer at construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronSettings {
    pub dt_ms: f64,
    pub tau_fast_ms: f64,
    pub tau_slow_ms: f64,
    pub v_th: f64,
    pub gamma_init: f64,
    pub gamma_spread: f64,
    pub surrogate_slope: f64,
    pub spike_condition: SpikeCondition,
    /// Stop gradients through the reset term.
    pub detach_reset: bool,
}

impl Default for NeuronSettings {
    fn default() -> Self {
        Self {
            dt_ms: 1.0,
            tau_fast_ms: 5.0,
            tau_slow_ms: 50.0,
            v_th: 1.0,
            gamma_init: 0.5,
            gamma_spread: 0.1,
            surrogate_slope: 1.0,
            spike_condition: SpikeCondition::Combined,
            detach_reset: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub in_shape: Shape3,
    pub out_shape: Shape3,
    /// `[out, in]` for dense, `[out_channels, in_channels, kh, kw]` for conv.
    pub weights: Vec<f64>,
    /// One per unit (dense) or per output channel (conv).
    pub bias: Vec<f64>,
    /// Pre-logistic gate parameters, same length as `bias`.
    pub gate_raw: Vec<f64>,
    pub decays: DecayPair,
    pub threshold: ThresholdConfig,
}

impl Layer {
    pub fn units(&self) -> usize {
        self.out_shape.size()
    }

    pub fn weight_len(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.out_shape.size() * self.in_shape.size(),
            LayerKind::Conv2d { kernel_h, kernel_w, .. } => {
                self.out_shape.channels * self.in_shape.channels * kernel_h * kernel_w
            }
        }
    }

    /// Number of units sharing one gate, bias and channel.
    pub fn group_size(&self) -> usize {
        match self.kind {
            LayerKind::Dense => 1,
            LayerKind::Conv2d { .. } => self.out_shape.spatial(),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight_len() / self.bias.len()
    }

    /// The gates in effect under `mode`.
    pub fn gates(&self, mode: NetworkMode) -> GateVector {
        match mode.frozen_gate() {
            Some(g) => GateVector::constant(self.gate_raw.len(), g),
            None => GateVector::from_raw(self.gate_raw.clone()),
        }
    }

    fn check(&self) -> Result<()> {
        let channels = match self.kind {
            LayerKind::Dense => self.out_shape.size(),
            LayerKind::Conv2d {
                kernel_h,
                kernel_w,
                stride,
            } => {
                let expect = conv_output_shape(self.in_shape, self.out_shape.channels, kernel_h, kernel_w, stride)?;
                if expect != self.out_shape {
                    return Err(Error::shape("conv output", expect, self.out_shape));
                }
                self.out_shape.channels
            }
        };
        if self.weights.len() != self.weight_len() {
            return Err(Error::shape("layer weights", self.weight_len(), self.weights.len()));
        }
        if self.bias.len() != channels {
            return Err(Error::shape("layer bias", channels, self.bias.len()));
        }
        if self.gate_raw.len() != channels {
            return Err(Error::shape("layer gates", channels, self.gate_raw.len()));
        }
        Ok(())
    }

    /// Runs this layer over `[batch * steps, in]` input rows.
    pub(crate) fn simulate(
        &self,
        input: ArrayView2<f64>,
        batch: usize,
        steps: usize,
        gates: &GateVector,
        opts: ForwardOptions,
        accumulate: Option<&mut Array2<f64>>,
    ) -> Result<LayerTrace> {
        let currents = synapse_currents(self.kind, self.in_shape, self.out_shape, &self.weights, &self.bias, input)?;
        let currents = currents.as_standard_layout();
        let n = self.units();
        let rows = batch * steps;
        let mut spikes = Array2::<f64>::zeros((rows, n));
        let mut membranes = (opts.record == Record::Membranes).then(|| Membranes {
            u_fast: Array2::zeros((rows, n)),
            u_slow: Array2::zeros((rows, n)),
            effective: Array2::zeros((rows, n)),
        });
        let mut acc = accumulate;
        let mut state = CompartmentState::zeros(n);
        let mut effective = vec![0.0; n];
        for b in 0..batch {
            state.reset();
            for t in 0..steps {
                let row = b * steps + t;
                lif_step(&mut state, currents.row(row).as_slice().expect("standard layout"), &self.decays)?;
                if let Some(m) = membranes.as_mut() {
                    m.u_fast.row_mut(row).as_slice_mut().unwrap().copy_from_slice(&state.u_fast);
                    m.u_slow.row_mut(row).as_slice_mut().unwrap().copy_from_slice(&state.u_slow);
                }
                fire_and_reset_into(
                    &mut state,
                    gates,
                    &self.threshold,
                    opts.spike_fn,
                    spikes.row_mut(row).as_slice_mut().unwrap(),
                    &mut effective,
                )?;
                if let Some(m) = membranes.as_mut() {
                    m.effective.row_mut(row).as_slice_mut().unwrap().copy_from_slice(&effective);
                }
                if let Some(acc) = acc.as_deref_mut() {
                    acc.row_mut(b).iter_mut().zip(&effective).for_each(|(a, u)| *a += u);
                }
            }
        }
        let total_spikes = spikes.iter().filter(|&&s| s != 0.0).count() as u64;
        Ok(LayerTrace {
            spikes,
            total_spikes,
            membranes,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Record {
    /// Spike rasters only.
    #[default]
    Spikes,
    /// Rasters plus pre-reset compartment and effective membranes (needed for BPTT).
    Membranes,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ForwardOptions {
    pub record: Record,
    pub spike_fn: SpikeFunction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Membranes {
    pub u_fast: Array2<f64>,
    pub u_slow: Array2<f64>,
    pub effective: Array2<f64>,
}

/// Per-layer result of a forward pass. Rows are `b * steps + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub spikes: Array2<f64>,
    pub total_spikes: u64,
    pub membranes: Option<Membranes>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub batch: usize,
    pub steps: usize,
    pub layers: Vec<LayerTrace>,
    /// `[batch, classes]` time-summed effective membrane of the output layer.
    pub output: Array2<f64>,
}

impl ForwardTrace {
    pub fn total_spikes(&self) -> u64 {
        self.layers.iter().map(|l| l.total_spikes).sum()
    }

    /// Spike of `unit` in `layer` at time `t` for sample `b`.
    pub fn spike(&self, layer: usize, t: usize, b: usize, unit: usize) -> f64 {
        self.layers[layer].spikes[[b * self.steps + t, unit]]
    }

    /// Fraction of (sample, step, unit) slots that spiked in `layer`.
    pub fn rate(&self, layer: usize) -> f64 {
        let s = &self.layers[layer].spikes;
        if s.is_empty() {
            return 0.0;
        }
        self.layers[layer].total_spikes as f64 / s.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weights,
    Bias,
    Gate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId {
    pub layer: usize,
    pub kind: ParamKind,
}

impl std::fmt::Display for ParamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            ParamKind::Weights => "weights",
            ParamKind::Bias => "bias",
            ParamKind::Gate => "gate",
        };
        write!(f, "layer{}.{}", self.layer, kind)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub input_shape: Shape3,
    pub layers: Vec<Layer>,
    pub mode: NetworkMode,
    pub readout: Readout,
    pub surrogate_slope: f64,
    pub detach_reset: bool,
    pub seed: u64,
}

impl Network {
    /// Builds a network with fan-in scaled Gaussian weights, zero biases and
    /// gates drawn uniformly from `gamma_init ± gamma_spread`.
    pub fn build(
        input_shape: Shape3,
        specs: &[LayerSpec],
        settings: &NeuronSettings,
        mode: NetworkMode,
        seed: u64,
    ) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("layers", "at least one layer is required"));
        }
        let decays = DecayPair::new(settings.dt_ms, settings.tau_fast_ms, settings.tau_slow_ms)?;
        let threshold = ThresholdConfig::new(settings.v_th)?.with_condition(settings.spike_condition);
        let lo = settings.gamma_init - settings.gamma_spread;
        let hi = settings.gamma_init + settings.gamma_spread;
        if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
            return Err(Error::invalid(
                "gamma_init",
                format!("init range [{lo}, {hi}] must lie inside (0, 1)"),
            ));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape;
        for (i, spec) in specs.iter().enumerate() {
            let (kind, out_shape) = match *spec {
                LayerSpec::Dense { units } => (LayerKind::Dense, Shape3::flat(units)),
                LayerSpec::Conv2d { filters, kernel, stride } => (
                    LayerKind::Conv2d {
                        kernel_h: kernel,
                        kernel_w: kernel,
                        stride,
                    },
                    conv_output_shape(shape, filters, kernel, kernel, stride)?,
                ),
            };
            if out_shape.size() == 0 {
                return Err(Error::invalid("layers", format!("layer {i} has no units")));
            }
            let channels = match kind {
                LayerKind::Dense => out_shape.size(),
                LayerKind::Conv2d { .. } => out_shape.channels,
            };
            let mut layer = Layer {
                kind,
                in_shape: shape,
                out_shape,
                weights: Vec::new(),
                bias: vec![0.0; channels],
                gate_raw: Vec::new(),
                decays,
                threshold,
            };
            let mut rng = rng_for(seed, 1 + i as u64);
            let std = (2.0 / layer.fan_in() as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            layer.weights = (0..layer.weight_len()).map(|_| normal.sample(&mut rng)).collect();
            let uniform = Uniform::new_inclusive(lo, hi);
            layer.gate_raw = (0..channels).map(|_| logit(uniform.sample(&mut rng))).collect();
            layers.push(layer);
            shape = out_shape;
        }
        let net = Self {
            input_shape,
            layers,
            mode,
            readout: Readout::MembraneSum,
            surrogate_slope: settings.surrogate_slope,
            detach_reset: settings.detach_reset,
            seed,
        };
        net.validate()?;
        Ok(net)
    }

    /// Checks that shapes chain and parameter lengths match.
    pub fn validate(&self) -> Result<()> {
        let mut shape = self.input_shape;
        for layer in &self.layers {
            if layer.in_shape.size() != shape.size() {
                return Err(Error::shape("layer chain", shape, layer.in_shape));
            }
            layer.check()?;
            shape = layer.out_shape;
        }
        if !(self.surrogate_slope > 0.0) {
            return Err(Error::invalid("surrogate_slope", "must be positive"));
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, Layer::units)
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.threshold.v_th).collect()
    }

    pub fn gates(&self, layer: usize) -> GateVector {
        self.layers[layer].gates(self.mode)
    }

    pub fn forward(&self, input: &SpikeTrainBatch, record: Record) -> Result<ForwardTrace> {
        self.forward_rows(
            input.to_rows().view(),
            input.batch(),
            input.steps(),
            ForwardOptions {
                record,
                spike_fn: SpikeFunction::Heaviside,
            },
        )
    }

    /// Forward pass over `[batch * steps, features]` input rows.
    pub fn forward_rows(
        &self,
        input: ArrayView2<f64>,
        batch: usize,
        steps: usize,
        opts: ForwardOptions,
    ) -> Result<ForwardTrace> {
        if steps == 0 {
            return Err(Error::EmptySequence);
        }
        if input.nrows() != batch * steps {
            return Err(Error::shape("input rows", batch * steps, input.nrows()));
        }
        if input.ncols() != self.input_shape.size() {
            return Err(Error::shape("input features", self.input_shape.size(), input.ncols()));
        }
        let mut output = Array2::<f64>::zeros((batch, self.classes()));
        let mut traces: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let x = match traces.last() {
                Some(prev) => prev.spikes.view(),
                None => input.view(),
            };
            let acc = (i == last).then_some(&mut output);
            let trace = layer.simulate(x, batch, steps, &layer.gates(self.mode), opts, acc)?;
            traces.push(trace);
        }
        Ok(ForwardTrace {
            batch,
            steps,
            layers: traces,
            output,
        })
    }

    /// Parameter tensors in a fixed order: per layer weights, bias, gate.
    pub fn params(&self) -> Vec<(ParamId, &[f64])> {
        let mut out = Vec::with_capacity(self.layers.len() * 3);
        for (i, l) in self.layers.iter().enumerate() {
            out.push((ParamId { layer: i, kind: ParamKind::Weights }, l.weights.as_slice()));
            out.push((ParamId { layer: i, kind: ParamKind::Bias }, l.bias.as_slice()));
            out.push((ParamId { layer: i, kind: ParamKind::Gate }, l.gate_raw.as_slice()));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(ParamId, &mut [f64])> {
        let mut out = Vec::with_capacity(self.layers.len() * 3);
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((ParamId { layer: i, kind: ParamKind::Weights }, l.weights.as_mut_slice()));
            out.push((ParamId { layer: i, kind: ParamKind::Bias }, l.bias.as_mut_slice()));
            out.push((ParamId { layer: i, kind: ParamKind::Gate }, l.gate_raw.as_mut_slice()));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }
}

/// Class with the largest readout per sample; ties go to the lowest index.
pub fn predict(trace: &ForwardTrace) -> Vec<usize> {
    trace
        .output
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Total spikes of `a` over total spikes of `b`.
pub fn spike_ratio(a: &ForwardTrace, b: &ForwardTrace) -> Result<f64> {
    spike_count_ratio(a.total_spikes(), b.total_spikes())
}

pub fn spike_count_ratio(a: u64, b: u64) -> Result<f64> {
    if b == 0 {
        return Err(Error::DegenerateBaseline);
    }
    Ok(a as f64 / b as f64)
}
