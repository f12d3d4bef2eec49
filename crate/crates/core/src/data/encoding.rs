use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ImageDataset;
use crate::error::{Error, Result};
use crate::rng::mix_seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingScheme {
    #[default]
    BernoulliRate,
}

/// How images become spike trains for one temporal domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub frequency_hz: f64,
    pub dt_ms: f64,
    pub duration_ms: f64,
    /// Rate reached at intensity 1.0.
    pub max_rate_hz: f64,
    pub scheme: EncodingScheme,
    pub seed: u64,
}

impl EncodingSpec {
    /// 1 ms steps over a 50 ms window, saturating at the domain frequency.
    pub fn new(frequency_hz: f64, seed: u64) -> Self {
        Self {
            frequency_hz,
            dt_ms: 1.0,
            duration_ms: 50.0,
            max_rate_hz: frequency_hz,
            scheme: EncodingScheme::BernoulliRate,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return Err(Error::invalid("frequency_hz", format!("must be positive, got {}", self.frequency_hz)));
        }
        if !(self.dt_ms > 0.0) {
            return Err(Error::invalid("dt_ms", format!("must be positive, got {}", self.dt_ms)));
        }
        if !(self.max_rate_hz > 0.0) {
            return Err(Error::invalid("max_rate_hz", format!("must be positive, got {}", self.max_rate_hz)));
        }
        if self.frequency_hz * self.dt_ms / 1000.0 > 1.0 {
            return Err(Error::invalid(
                "frequency_hz",
                format!(
                    "{} Hz at dt {} ms gives a per-step spike probability above 1",
                    self.frequency_hz, self.dt_ms
                ),
            ));
        }
        if self.max_rate_hz * self.dt_ms / 1000.0 > 1.0 {
            return Err(Error::invalid(
                "max_rate_hz",
                format!("per-step spike probability {} exceeds 1", self.max_rate_hz * self.dt_ms / 1000.0),
            ));
        }
        if self.duration_ms < self.dt_ms {
            return Err(Error::invalid("duration_ms", "must be at least one time step"));
        }
        let steps = self.duration_ms / self.dt_ms;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::invalid("duration_ms", "must be a whole number of time steps"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration_ms / self.dt_ms).round() as usize
    }

    /// Per-step spike probability for a pixel of the given intensity.
    pub fn probability(&self, intensity: f64) -> f64 {
        (intensity * self.max_rate_hz * self.dt_ms / 1000.0).clamp(0.0, 1.0)
    }

    /// Same spec with a seed derived from `salt`, e.g. for fresh draws each epoch.
    pub fn reseeded(&self, salt: u64) -> Self {
        Self {
            seed: mix_seed(self.seed, salt),
            ..self.clone()
        }
    }
}

/// Binary spike trains `[batch, time, features]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeTrainBatch {
    pub spikes: Array3<u8>,
    pub spec: EncodingSpec,
    pub source_ids: Vec<u64>,
}

impl SpikeTrainBatch {
    pub fn new(spikes: Array3<u8>, spec: EncodingSpec, source_ids: Vec<u64>) -> Result<Self> {
        if source_ids.len() != spikes.dim().0 {
            return Err(Error::shape("source ids", spikes.dim().0, source_ids.len()));
        }
        if spikes.iter().any(|&s| s > 1) {
            return Err(Error::Format("spike raster must be binary".into()));
        }
        Ok(Self {
            spikes,
            spec,
            source_ids,
        })
    }

    pub fn batch(&self) -> usize {
        self.spikes.dim().0
    }

    pub fn steps(&self) -> usize {
        self.spikes.dim().1
    }

    pub fn features(&self) -> usize {
        self.spikes.dim().2
    }

    pub fn total_spikes(&self) -> u64 {
        self.spikes.iter().map(|&s| s as u64).sum()
    }

    /// Flattens to `[batch * time, features]` rows, row `b * T + t`.
    pub fn to_rows(&self) -> Array2<f64> {
        let (b, t, f) = self.spikes.dim();
        Array2::from_shape_vec((b * t, f), self.spikes.iter().map(|&s| s as f64).collect())
            .expect("raster is contiguous")
    }
}

/// Bernoulli rate coding. Each sample draws from its own stream keyed by
/// `(spec.seed, dataset index)`, so a sample encodes identically no matter
/// which batch it lands in.
pub fn encode(ds: &ImageDataset, spec: &EncodingSpec, indices: &[usize]) -> Result<SpikeTrainBatch> {
    spec.validate()?;
    let steps = spec.steps();
    let pixels = ds.pixels();
    let mut spikes = Array3::<u8>::zeros((indices.len(), steps, pixels));
    let mut probs = vec![0.0; pixels];
    for (row, &idx) in indices.iter().enumerate() {
        if idx >= ds.len() {
            return Err(Error::shape("encode index", format!("< {}", ds.len()), idx));
        }
        for (p, &v) in probs.iter_mut().zip(ds.image(idx)) {
            *p = spec.probability(v);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(idx as u64);
        let mut sample = spikes.index_axis_mut(ndarray::Axis(0), row);
        for t in 0..steps {
            for (px, &p) in probs.iter().enumerate() {
                let u: f64 = rng.gen();
                sample[[t, px]] = (u < p) as u8;
            }
        }
    }
    Ok(SpikeTrainBatch {
        spikes,
        spec: spec.clone(),
        source_ids: indices.iter().map(|&i| i as u64).collect(),
    })
}
