mod common;

use common::{binomial_sigma, time_summed, Logistic};
use ltgate::data::{encode, make_toy_dataset, EncodingSpec, ImageDataset};

const PIXELS: usize = 64;
const SAMPLES: usize = 8;

fn constant_images(intensity: f64) -> ImageDataset {
    ImageDataset::new("flat", "test", 1, PIXELS, vec![intensity; PIXELS * SAMPLES], vec![0; SAMPLES], 1).unwrap()
}

fn long_spec(frequency_hz: f64, seed: u64) -> EncodingSpec {
    EncodingSpec {
        duration_ms: 1000.0,
        ..EncodingSpec::new(frequency_hz, seed)
    }
}

#[test]
fn empirical_rate_matches_intensity_times_frequency() {
    for (k, &freq) in [1000.0, 50.0, 10.0].iter().enumerate() {
        for &intensity in &[0.0, 0.25, 0.5, 1.0] {
            let spec = long_spec(freq, 40 + k as u64);
            let idx: Vec<usize> = (0..SAMPLES).collect();
            let batch = encode(&constant_images(intensity), &spec, &idx).unwrap();
            let trials = batch.spikes.len();
            let empirical = batch.total_spikes() as f64 / trials as f64;
            let p = intensity * freq * spec.dt_ms / 1000.0;
            if p == 0.0 || p == 1.0 {
                assert_eq!(empirical, p, "{freq} Hz at {intensity}");
            } else {
                let tol = 3.0 * binomial_sigma(p, trials);
                assert!((empirical - p).abs() <= tol, "{freq} Hz at {intensity}: {empirical} vs {p} +- {tol}");
            }
        }
    }
}

#[test]
fn spike_counts_order_by_frequency() {
    let ds = make_toy_dataset(4, 8, 32, 1.0, 5, "train");
    let idx: Vec<usize> = (0..ds.len()).collect();
    let counts: Vec<u64> = [1000.0, 50.0, 10.0]
        .iter()
        .map(|&f| encode(&ds, &EncodingSpec::new(f, 2), &idx).unwrap().total_spikes())
        .collect();
    assert!(counts[0] > counts[1] && counts[1] > counts[2], "{counts:?}");
}

fn intensities(ds: &ImageDataset) -> Vec<Vec<f64>> {
    (0..ds.len()).map(|i| ds.image(i).to_vec()).collect()
}

#[test]
fn overlapping_classes_are_at_chance() {
    let classes = 4;
    let train = make_toy_dataset(classes, 50, 20, 0.0, 8, "train");
    let test = make_toy_dataset(classes, 50, 20, 0.0, 8, "test");
    let model = Logistic::fit(&intensities(&train), &train.labels, classes, 300, 0.5);
    let acc = model.accuracy(&intensities(&test), &test.labels);
    let chance = 1.0 / classes as f64;
    let tol = 3.0 * binomial_sigma(chance, test.len());
    assert!((acc - chance).abs() <= tol, "{acc} vs chance {chance} +- {tol}");
}

#[test]
fn well_separated_classes_are_linearly_separable() {
    let classes = 4;
    let train = make_toy_dataset(classes, 50, 20, 5.0, 8, "train");
    let test = make_toy_dataset(classes, 50, 20, 5.0, 8, "test");
    let model = Logistic::fit(&intensities(&train), &train.labels, classes, 300, 0.5);
    assert!(model.accuracy(&intensities(&test), &test.labels) >= 0.99);

    // the class signal survives rate coding
    let spec = EncodingSpec::new(1000.0, 4);
    let enc_train = encode(&train, &spec, &(0..train.len()).collect::<Vec<_>>()).unwrap();
    let enc_test = encode(&test, &spec.reseeded(1), &(0..test.len()).collect::<Vec<_>>()).unwrap();
    let scale = |v: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        v.into_iter().map(|r| r.into_iter().map(|c| c / spec.steps() as f64).collect()).collect()
    };
    let model = Logistic::fit(&scale(time_summed(&enc_train)), &train.labels, classes, 300, 0.5);
    assert!(model.accuracy(&scale(time_summed(&enc_test)), &test.labels) >= 0.99);
}

#[test]
fn a_sample_encodes_the_same_in_any_batch() {
    let ds = make_toy_dataset(3, 4, 10, 1.0, 1, "train");
    let spec = EncodingSpec::new(300.0, 6);
    let all = encode(&ds, &spec, &[0, 5, 7]).unwrap();
    let alone = encode(&ds, &spec, &[5]).unwrap();
    assert_eq!(all.spikes.index_axis(ndarray::Axis(0), 1), alone.spikes.index_axis(ndarray::Axis(0), 0));
}
