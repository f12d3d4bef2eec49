//! Datasets, rate encoding into spike trains, and the spike file format.

mod encoding;
mod idx;
mod spikefile;
mod toy;

pub use encoding::{encode, EncodingScheme, EncodingSpec, SpikeTrainBatch};
pub use idx::{downsample_2x, load_idx, write_idx_images, write_idx_labels, IMAGES_MAGIC, LABELS_MAGIC};
pub use spikefile::{load_spikes, read_spikes, save_spikes, write_spikes, SPIKE_FILE_VERSION};
pub use toy::make_toy_dataset;

use crate::error::{Error, Result};

/// Grayscale images with intensities in `[0, 1]` and their class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageDataset {
    pub name: String,
    pub split: String,
    pub height: usize,
    pub width: usize,
    /// Row-major `[n, height, width]`.
    pub images: Vec<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl ImageDataset {
    pub fn new(
        name: impl Into<String>,
        split: impl Into<String>,
        height: usize,
        width: usize,
        images: Vec<f64>,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        let pixels = height * width;
        if pixels == 0 || images.len() % pixels != 0 {
            return Err(Error::Format(format!(
                "{} intensities is not a whole number of {height}x{width} images",
                images.len()
            )));
        }
        if images.len() / pixels != labels.len() {
            return Err(Error::CountMismatch {
                images: images.len() / pixels,
                labels: labels.len(),
            });
        }
        if let Some(v) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Format(format!("intensity {v} outside [0, 1]")));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label: l, classes });
        }
        Ok(Self {
            name: name.into(),
            split: split.into(),
            height,
            width,
            images,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let p = self.pixels();
        &self.images[i * p..(i + 1) * p]
    }

    /// First `n` samples (or all, if fewer).
    pub fn truncated(&self, n: usize) -> Self {
        self.slice(0, n)
    }

    /// Up to `n` samples starting at `start`.
    pub fn slice(&self, start: usize, n: usize) -> Self {
        let start = start.min(self.len());
        let end = start.saturating_add(n).min(self.len());
        let p = self.pixels();
        Self {
            name: self.name.clone(),
            split: self.split.clone(),
            height: self.height,
            width: self.width,
            images: self.images[start * p..end * p].to_vec(),
            labels: self.labels[start..end].to_vec(),
            classes: self.classes,
        }
    }

    /// Same images, uniformly random intensities; used as calibration probe data.
    pub fn noise_like(&self, n: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let images = (0..n * self.pixels()).map(|_| rng.gen::<f64>()).collect();
        Self {
            name: format!("{}-noise", self.name),
            split: "probe".into(),
            images,
            labels: vec![0; n],
            ..self.clone()
        }
    }
}
