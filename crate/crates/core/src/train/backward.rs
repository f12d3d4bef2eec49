//! Backpropagation through time over the unrolled network.
//!
//! Layers are processed top-down; within a layer the time axis runs
//! backwards carrying d(loss)/d(post-reset compartment) for both
//! compartments. The spike step is differentiated with the rectangular
//! surrogate, including inside the soft-reset term unless the network
//! detaches it.

use ndarray::{Array2, ArrayView2};

use super::loss::{cross_entropy, hidden_stats, variance_loss, FiringStats, LossBreakdown, LossConfig};
use crate::error::{Error, Result};
use crate::network::{synapse_backward, ForwardOptions, ForwardTrace, Network, ParamId, Record};
use crate::neuron::{surrogate_grad, SpikeCondition, SpikeFunction};

/// Gradients laid out in [`Network::params`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub groups: Vec<(ParamId, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            groups: net.params().into_iter().map(|(id, p)| (id, vec![0.0; p.len()])).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.groups.iter().find(|(g, _)| *g == id).map(|(_, v)| v.as_slice())
    }

    pub fn get_mut(&mut self, id: ParamId) -> Option<&mut Vec<f64>> {
        self.groups.iter_mut().find(|(g, _)| *g == id).map(|(_, v)| v)
    }

    pub fn norm(&self) -> f64 {
        self.groups.iter().flat_map(|(_, v)| v).map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Everything one forward/backward pass produces.
#[derive(Clone, Debug)]
pub struct BackwardOutput {
    pub loss: LossBreakdown,
    pub grads: Gradients,
    pub trace: ForwardTrace,
}

/// d(L_var)/d(spike) for every slot of a hidden layer.
fn variance_spike_grad(spikes: ArrayView2<f64>, stats: &FiringStats, cfg: &LossConfig) -> Array2<f64> {
    let n = spikes.nrows() as f64;
    let mut g = Array2::<f64>::zeros(spikes.dim());
    for (i, (&mu, &sigma)) in stats.mu.iter().zip(&stats.sigma).enumerate() {
        let d_mu = 2.0 * cfg.lambda_var * (mu - cfg.mu_star) / n;
        let d_sigma = if sigma > 0.0 {
            2.0 * cfg.lambda_var * (sigma - cfg.sigma_star) / (n * sigma)
        } else {
            0.0
        };
        for (r, &s) in spikes.column(i).iter().enumerate() {
            g[[r, i]] = d_mu + d_sigma * (s - mu);
        }
    }
    g
}

/// Forward pass, loss, and gradients of the loss for every parameter.
pub fn backward(
    net: &Network,
    input: ArrayView2<f64>,
    batch: usize,
    steps: usize,
    labels: &[usize],
    cfg: &LossConfig,
    spike_fn: SpikeFunction,
) -> Result<BackwardOutput> {
    let trace = net.forward_rows(
        input,
        batch,
        steps,
        ForwardOptions {
            record: Record::Membranes,
            spike_fn,
        },
    )?;
    let (ce, d_output) = cross_entropy(&trace.output, labels)?;
    let stats = hidden_stats(&trace)?;
    let var = variance_loss(&stats, cfg);

    let n_layers = net.layers.len();
    let mut grads = Gradients::zeros_like(net);
    let slope = net.surrogate_slope;
    // d loss / d spikes of the layer currently being processed
    let mut d_spikes: Option<Array2<f64>> = None;

    for l in (0..n_layers).rev() {
        let layer = &net.layers[l];
        let lt = &trace.layers[l];
        let m = lt.membranes.as_ref().expect("recorded membranes");
        let units = layer.units();
        let group = layer.group_size();
        let gates = layer.gates(net.mode);
        let v_th = layer.threshold.v_th;
        let (rho_f, rho_s) = (layer.decays.rho_fast, layer.decays.rho_slow);
        let is_last = l + 1 == n_layers;

        let mut ds_ext = d_spikes.take().unwrap_or_else(|| Array2::zeros((batch * steps, units)));
        if !is_last && cfg.lambda_var != 0.0 {
            ds_ext += &variance_spike_grad(lt.spikes.view(), &stats[l], cfg);
        }

        let mut d_current = Array2::<f64>::zeros((batch * steps, units));
        let mut d_gamma = vec![0.0; gates.len()];
        let mut g_vf = vec![0.0; units];
        let mut g_vs = vec![0.0; units];
        for b in 0..batch {
            g_vf.iter_mut().for_each(|v| *v = 0.0);
            g_vs.iter_mut().for_each(|v| *v = 0.0);
            for t in (0..steps).rev() {
                let row = b * steps + t;
                for i in 0..units {
                    let gamma = gates.gamma[i / group];
                    let uf = m.u_fast[[row, i]];
                    let us = m.u_slow[[row, i]];
                    let u = m.effective[[row, i]];
                    // the reset term only matters through the surrogate, which keeps
                    // an infinite threshold from producing inf * 0
                    let ds = || {
                        let mut ds = ds_ext[[row, i]];
                        if !net.detach_reset {
                            ds -= v_th * (g_vf[i] + g_vs[i]);
                        }
                        ds
                    };
                    let mut du = if is_last { d_output[[b, i]] } else { 0.0 };
                    let (mut duf, mut dus) = (g_vf[i], g_vs[i]);
                    match layer.threshold.spike_condition {
                        SpikeCondition::Combined => {
                            let sg = surrogate_grad(u, v_th, slope);
                            if sg != 0.0 {
                                du += ds() * sg;
                            }
                        }
                        SpikeCondition::Either => {
                            let (v, d) = if uf >= us { (uf, &mut duf) } else { (us, &mut dus) };
                            let sg = surrogate_grad(v, v_th, slope);
                            if sg != 0.0 {
                                *d += ds() * sg;
                            }
                        }
                    }
                    duf += (1.0 - gamma) * du;
                    dus += gamma * du;
                    d_gamma[i / group] += du * (us - uf);
                    d_current[[row, i]] = duf + dus;
                    g_vf[i] = rho_f * duf;
                    g_vs[i] = rho_s * dus;
                }
            }
        }

        let x = if l == 0 { input.view() } else { trace.layers[l - 1].spikes.view() };
        let sg = synapse_backward(
            layer.kind,
            layer.in_shape,
            layer.out_shape,
            &layer.weights,
            x,
            d_current.view(),
            l > 0,
        )?;
        let base = 3 * l;
        grads.groups[base].1 = sg.weights;
        grads.groups[base + 1].1 = sg.bias;
        if net.mode.frozen_gate().is_none() {
            grads.groups[base + 2].1 = d_gamma.iter().enumerate().map(|(j, &d)| d * gates.slope(j)).collect();
        }
        d_spikes = sg.input;
    }

    for (id, g) in &grads.groups {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite gradient in {id}")));
        }
    }

    Ok(BackwardOutput {
        loss: LossBreakdown {
            cross_entropy: ce,
            variance: var,
            total: ce + var,
        },
        grads,
        trace,
    })
}
