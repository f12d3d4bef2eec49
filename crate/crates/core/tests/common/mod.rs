#![allow(dead_code)]

use ltgate::calibration::measure_rate;
use ltgate::config::ExperimentConfig;
use ltgate::data::SpikeTrainBatch;
use ltgate::network::Network;
use ndarray::{Array2, ArrayView2};

pub fn toy_config() -> ExperimentConfig {
    ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/toy.toml")).unwrap()
}

/// Toy config shrunk for fast tests.
pub fn small_config(epochs: usize) -> ExperimentConfig {
    let mut cfg = toy_config();
    cfg.data.classes = 4;
    cfg.data.train_per_class = 24;
    cfg.data.test_per_class = 20;
    cfg.data.feature_dim = 16;
    cfg.data.separation = 3.0;
    cfg.model.layers = vec!["dense:24".into()];
    cfg.exposure.samples = 32;
    for t in &mut cfg.tasks {
        t.epochs = epochs;
        t.duration_ms = 20.0;
    }
    cfg.exposure.duration_ms = 20.0;
    cfg
}

/// Multinomial logistic regression by full-batch gradient descent.
pub struct Logistic {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Logistic {
    pub fn fit(xs: &[Vec<f64>], ys: &[usize], classes: usize, epochs: usize, lr: f64) -> Self {
        let dim = xs[0].len();
        let mut m = Self {
            weights: vec![vec![0.0; dim]; classes],
            bias: vec![0.0; classes],
        };
        let n = xs.len() as f64;
        for _ in 0..epochs {
            let mut gw = vec![vec![0.0; dim]; classes];
            let mut gb = vec![0.0; classes];
            for (x, &y) in xs.iter().zip(ys) {
                let p = m.probs(x);
                for c in 0..classes {
                    let d = p[c] - if c == y { 1.0 } else { 0.0 };
                    gb[c] += d / n;
                    for (g, v) in gw[c].iter_mut().zip(x) {
                        *g += d * v / n;
                    }
                }
            }
            for c in 0..classes {
                m.bias[c] -= lr * gb[c];
                for (w, g) in m.weights[c].iter_mut().zip(&gw[c]) {
                    *w -= lr * g;
                }
            }
        }
        m
    }

    fn probs(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        let hits = xs
            .iter()
            .zip(ys)
            .filter(|(x, &y)| {
                let p = self.probs(x);
                let best = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
                best == y
            })
            .count();
        hits as f64 / xs.len() as f64
    }
}

/// Per-sample spike counts summed over time.
pub fn time_summed(batch: &SpikeTrainBatch) -> Vec<Vec<f64>> {
    batch
        .spikes
        .outer_iter()
        .map(|sample| {
            let mut v = vec![0.0; batch.features()];
            for step in sample.outer_iter() {
                v.iter_mut().zip(step.iter()).for_each(|(a, &s)| *a += s as f64);
            }
            v
        })
        .collect()
}

/// Rates of `layer` over a geometric threshold grid, earlier layers as they are.
pub fn threshold_sweep(net: &Network, probe: &[SpikeTrainBatch], layer: usize, lo: f64, hi: f64, points: usize) -> Vec<(f64, f64)> {
    let mut probe_net = net.clone();
    (0..points)
        .map(|k| {
            let v = lo * (hi / lo).powf(k as f64 / (points - 1) as f64);
            probe_net.layers[layer].threshold.v_th = v;
            (v, measure_rate(&probe_net, probe, layer).unwrap())
        })
        .collect()
}

/// Binomial standard deviation of a proportion.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Textbook single-timescale LIF stack: `u = rho * u + I`, spike when
/// `u >= v_th`, subtract `v_th` on a spike.
pub fn plain_lif(net: &Network, input: ArrayView2<f64>, steps: usize, rho: f64) -> Vec<Array2<f64>> {
    let mut x = input.to_owned();
    let mut rasters = Vec::new();
    for layer in &net.layers {
        let (units, fan_in) = (layer.units(), layer.in_shape.size());
        // same matrix product as the network, so only the neuron update differs
        let w = ArrayView2::from_shape((units, fan_in), &layer.weights).unwrap();
        let mut current = x.dot(&w.t());
        for mut row in current.rows_mut() {
            row.iter_mut().zip(&layer.bias).for_each(|(c, b)| *c += b);
        }
        let v_th = layer.threshold.v_th;
        let mut out = Array2::zeros(current.dim());
        let batch = current.nrows() / steps;
        for b in 0..batch {
            let mut u = vec![0.0; units];
            for t in 0..steps {
                let row = b * steps + t;
                for j in 0..units {
                    u[j] = rho * u[j] + current[[row, j]];
                    if u[j] >= v_th {
                        out[[row, j]] = 1.0;
                        u[j] -= v_th;
                    }
                }
            }
        }
        rasters.push(out.clone());
        x = out;
    }
    rasters
}
