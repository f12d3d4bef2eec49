use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::backward::backward;
use super::loss::{cross_entropy, LossConfig};
use crate::data::{encode, EncodingSpec, ImageDataset};
use crate::error::{Error, Result};
use crate::network::{predict, Network, Record};
use crate::neuron::SpikeFunction;
use crate::rng::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 32,
            eval_batch_size: 100,
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

/// A labelled dataset seen through one encoding.
#[derive(Clone, Copy, Debug)]
pub struct EvalSet<'a> {
    pub name: &'a str,
    pub data: &'a ImageDataset,
    pub encoding: &'a EncodingSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub name: String,
    pub samples: usize,
    pub accuracy: f64,
    pub cross_entropy: f64,
    /// Spike fraction per layer.
    pub layer_rates: Vec<f64>,
    pub spikes: u64,
    /// Standard deviation across hidden units of their mean firing rate.
    pub unit_rate_std: f64,
}

impl EvalResult {
    pub fn spikes_per_inference(&self) -> f64 {
        self.spikes as f64 / self.samples.max(1) as f64
    }
}

/// Accuracy, loss and firing statistics over a whole dataset.
pub fn evaluate(net: &Network, set: EvalSet<'_>, batch_size: usize) -> Result<EvalResult> {
    if batch_size == 0 {
        return Err(Error::invalid("eval_batch_size", "must be positive"));
    }
    let n_layers = net.layers.len();
    let hidden = n_layers.saturating_sub(1);
    let mut correct = 0usize;
    let mut ce_sum = 0.0;
    let mut layer_spikes = vec![0u64; n_layers];
    let mut layer_slots = vec![0usize; n_layers];
    let mut unit_spikes: Vec<Vec<f64>> = net.layers[..hidden].iter().map(|l| vec![0.0; l.units()]).collect();
    let mut rows_seen = 0usize;
    let indices: Vec<usize> = (0..set.data.len()).collect();
    for chunk in indices.chunks(batch_size) {
        let batch = encode(set.data, set.encoding, chunk)?;
        let trace = net.forward(&batch, Record::Spikes)?;
        let labels: Vec<usize> = chunk.iter().map(|&i| set.data.labels[i]).collect();
        correct += predict(&trace).iter().zip(&labels).filter(|(p, l)| p == l).count();
        ce_sum += cross_entropy(&trace.output, &labels)?.0 * chunk.len() as f64;
        for (l, lt) in trace.layers.iter().enumerate() {
            layer_spikes[l] += lt.total_spikes;
            layer_slots[l] += lt.spikes.len();
            if l < hidden {
                for (acc, col) in unit_spikes[l].iter_mut().zip(lt.spikes.columns()) {
                    *acc += col.sum();
                }
            }
        }
        rows_seen += trace.batch * trace.steps;
    }
    let n = set.data.len();
    let rates: Vec<f64> = unit_spikes
        .iter()
        .flatten()
        .map(|&s| s / rows_seen.max(1) as f64)
        .collect();
    Ok(EvalResult {
        name: set.name.to_string(),
        samples: n,
        accuracy: correct as f64 / n.max(1) as f64,
        cross_entropy: ce_sum / n.max(1) as f64,
        layer_rates: layer_spikes
            .iter()
            .zip(&layer_slots)
            .map(|(&s, &slots)| if slots == 0 { 0.0 } else { s as f64 / slots as f64 })
            .collect(),
        spikes: layer_spikes.iter().sum(),
        unit_rate_std: population_std(&rates),
    })
}

pub(crate) fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch within the task.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_cross_entropy: f64,
    pub train_variance: f64,
    pub train_accuracy: f64,
    pub train_layer_rates: Vec<f64>,
    pub train_spikes: u64,
    pub evals: Vec<EvalResult>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub task: String,
    pub epochs: Vec<EpochRecord>,
    /// Optimizer state after the last update.
    #[serde(skip)]
    pub optimizer: Option<AdamState>,
}

/// Hooks into the training loop.
pub trait TrainObserver {
    /// Called for every minibatch drawn from the training data.
    fn on_batch(&mut self, _task: &str, _data: &ImageDataset, _indices: &[usize]) {}
    fn on_epoch(&mut self, _task: &str, _record: &EpochRecord, _net: &Network) -> Result<()> {
        Ok(())
    }
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Trains `net` on one task for `epochs` epochs with a fresh Adam state,
/// evaluating every set in `evals` after each epoch. Training samples are
/// re-encoded every epoch with a seed derived from the epoch number.
#[allow(clippy::too_many_arguments)]
pub fn train_task(
    net: &mut Network,
    task: &str,
    train: &ImageDataset,
    encoding: &EncodingSpec,
    epochs: usize,
    cfg: &TrainConfig,
    evals: &[EvalSet<'_>],
    observer: &mut dyn TrainObserver,
) -> Result<TrainRecord> {
    if train.is_empty() {
        return Err(Error::invalid("dataset", "training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be positive"));
    }
    cfg.loss.validate()?;
    encoding.validate()?;
    let mut record = TrainRecord {
        task: task.to_string(),
        epochs: Vec::with_capacity(epochs),
        optimizer: None,
    };
    let mut opt = AdamState::for_params(cfg.adam, &net.params());
    let task_salt = task.bytes().fold(0u64, |h, b| h.wrapping_mul(257).wrapping_add(b as u64));
    let n_layers = net.layers.len();

    for epoch in 1..=epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed ^ task_salt, epoch as u64));
        let epoch_encoding = encoding.reseeded(epoch as u64);

        let (mut loss, mut ce, mut var) = (0.0, 0.0, 0.0);
        let mut correct = 0usize;
        let mut spikes = vec![0u64; n_layers];
        let mut slots = vec![0usize; n_layers];
        for chunk in order.chunks(cfg.batch_size) {
            observer.on_batch(task, train, chunk);
            let batch = encode(train, &epoch_encoding, chunk)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let out = backward(
                net,
                batch.to_rows().view(),
                batch.batch(),
                batch.steps(),
                &labels,
                &cfg.loss,
                SpikeFunction::Heaviside,
            )?;
            let w = chunk.len() as f64;
            loss += out.loss.total * w;
            ce += out.loss.cross_entropy * w;
            var += out.loss.variance * w;
            correct += predict(&out.trace).iter().zip(&labels).filter(|(p, l)| p == l).count();
            for (l, lt) in out.trace.layers.iter().enumerate() {
                spikes[l] += lt.total_spikes;
                slots[l] += lt.spikes.len();
            }
            adam_step(net.params_mut(), &out.grads, &mut opt)?;
        }
        let n = train.len() as f64;
        let evals = evals
            .iter()
            .map(|set| evaluate(net, *set, cfg.eval_batch_size))
            .collect::<Result<Vec<_>>>()?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss / n,
            train_cross_entropy: ce / n,
            train_variance: var / n,
            train_accuracy: correct as f64 / n,
            train_layer_rates: spikes.iter().zip(&slots).map(|(&s, &k)| s as f64 / k.max(1) as f64).collect(),
            train_spikes: spikes.iter().sum(),
            evals,
        };
        observer.on_epoch(task, &rec, net)?;
        record.epochs.push(rec);
    }
    record.optimizer = Some(opt);
    Ok(record)
}
