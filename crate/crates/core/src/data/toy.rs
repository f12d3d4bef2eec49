use rand_distr::{Distribution, StandardNormal};

use super::ImageDataset;
use crate::rng::rng_for;

/// Noise scale (in intensity units) shared by prototypes and per-sample jitter.
const SCALE: f64 = 0.15;

/// Gaussian-blob classification data shaped as `1 x feature_dim` images.
///
/// Class prototypes are `0.5 + SCALE * separation * m_c` with `m_c ~ N(0, I)`
/// drawn once from `seed`; samples add `SCALE * N(0, I)` jitter and are
/// clipped to `[0, 1]`. `split` selects an independent sample stream over
/// the same prototypes, so train and test sets share their classes.
/// Labels cycle `0, 1, .., classes - 1` so any prefix stays balanced.
pub fn make_toy_dataset(
    classes: usize,
    n_per_class: usize,
    feature_dim: usize,
    separation: f64,
    seed: u64,
    split: &str,
) -> ImageDataset {
    let mut proto_rng = rng_for(seed, 0);
    let prototypes: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            (0..feature_dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut proto_rng);
                    SCALE * separation * z
                })
                .collect()
        })
        .collect();

    let salt = split.bytes().fold(1u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
    let mut rng = rng_for(seed, salt);
    let n = classes * n_per_class;
    let mut images = Vec::with_capacity(n * feature_dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for &m in &prototypes[c] {
            let z: f64 = StandardNormal.sample(&mut rng);
            images.push((0.5 + m + SCALE * z).clamp(0.0, 1.0));
        }
        labels.push(c);
    }
    ImageDataset::new("toy", split, 1, feature_dim, images, labels, classes).expect("toy data is well formed")
}
