use ltgate::network::{LayerSpec, Network, NetworkMode, NeuronSettings, ParamId, ParamKind, Shape3};
use ltgate::neuron::SpikeCondition;
use ltgate::train::{backward, gradcheck, numeric_gradients, GradRegime, GradientReport, LossConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEPS: usize = 3;
const BATCH: usize = 2;
const EPS: f64 = 1e-6;

fn inputs(features: usize, scale: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((BATCH * STEPS, features), |_| rng.gen::<f64>() * scale)
}

fn net(features: usize, specs: &[LayerSpec], settings: NeuronSettings, seed: u64) -> Network {
    let n = Network::build(Shape3::flat(features), specs, &settings, NetworkMode::Ltgate, seed).unwrap();
    assert!(n.param_count() <= 50, "{} parameters", n.param_count());
    n
}

fn smoothed_net(condition: SpikeCondition, detach_reset: bool) -> Network {
    // a silent input leaves the membrane at 0; keep that strictly inside the
    // clamp so no finite difference straddles a kink
    let settings = NeuronSettings {
        v_th: 0.45,
        surrogate_slope: 1.0,
        spike_condition: condition,
        detach_reset,
        ..NeuronSettings::default()
    };
    net(3, &[LayerSpec::Dense { units: 4 }, LayerSpec::Dense { units: 2 }], settings, 21)
}

fn var_loss() -> LossConfig {
    LossConfig {
        lambda_var: 0.1,
        ..LossConfig::default()
    }
}

#[test]
fn no_spike_regime_within_1e_4() {
    let settings = NeuronSettings {
        v_th: 1e3,
        ..NeuronSettings::default()
    };
    let n = net(5, &[LayerSpec::Dense { units: 4 }], settings, 4);
    let x = inputs(5, 1.0, 1);
    let report = gradcheck(&n, x.view(), BATCH, STEPS, &[0, 3], &LossConfig::default(), GradRegime::NoSpike, EPS, 1e-4)
        .unwrap();
    assert!(report.passed, "max relative error {}", report.max_rel_error());
}

#[test]
fn smoothed_regime_within_1e_3() {
    let n = smoothed_net(SpikeCondition::Combined, false);
    let x = inputs(3, 1.5, 2);
    let report =
        gradcheck(&n, x.view(), BATCH, STEPS, &[1, 0], &var_loss(), GradRegime::SurrogateSmoothed, EPS, 1e-3).unwrap();
    assert!(report.passed, "{:#?}", report.groups);
    // every parameter group actually carries gradient
    let analytic = backward(&n, x.view(), BATCH, STEPS, &[1, 0], &var_loss(), GradRegime::SurrogateSmoothed.spike_fn(1.0))
        .unwrap();
    for (id, g) in &analytic.grads.groups {
        assert!(g.iter().any(|v| v.abs() > 1e-9), "{id} has no gradient");
    }
}

#[test]
fn smoothed_regime_with_either_condition() {
    let n = smoothed_net(SpikeCondition::Either, false);
    let x = inputs(3, 1.5, 3);
    let report =
        gradcheck(&n, x.view(), BATCH, STEPS, &[0, 1], &var_loss(), GradRegime::SurrogateSmoothed, EPS, 1e-3).unwrap();
    assert!(report.passed, "{:#?}", report.groups);
}

#[test]
fn detached_reset_is_not_the_true_gradient() {
    let n = smoothed_net(SpikeCondition::Combined, true);
    let x = inputs(3, 1.5, 2);
    let report =
        gradcheck(&n, x.view(), BATCH, STEPS, &[1, 0], &var_loss(), GradRegime::SurrogateSmoothed, EPS, 1e-3).unwrap();
    assert!(!report.passed);
}

#[test]
fn corrupted_gradient_is_caught() {
    let n = smoothed_net(SpikeCondition::Combined, false);
    let x = inputs(3, 1.5, 2);
    let spike_fn = GradRegime::SurrogateSmoothed.spike_fn(1.0);
    let mut analytic = backward(&n, x.view(), BATCH, STEPS, &[1, 0], &var_loss(), spike_fn).unwrap().grads;
    let numeric = numeric_gradients(&n, x.view(), BATCH, STEPS, &[1, 0], &var_loss(), spike_fn, EPS).unwrap();
    let clean = GradientReport::compare(GradRegime::SurrogateSmoothed, &analytic, &numeric, 1e-3);
    assert!(clean.passed);
    let id = ParamId {
        layer: 0,
        kind: ParamKind::Weights,
    };
    let g = analytic.get_mut(id).unwrap();
    let k = g.iter().position(|v| v.abs() > 1e-6).unwrap();
    g[k] *= 1.01;
    let broken = GradientReport::compare(GradRegime::SurrogateSmoothed, &analytic, &numeric, 1e-3);
    assert!(!broken.passed);
    let failed: Vec<ParamId> = broken.groups.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    assert_eq!(failed, vec![id]);
}

#[test]
fn no_spike_check_refuses_spiking_net() {
    let n = smoothed_net(SpikeCondition::Combined, false);
    let x = inputs(3, 1.5, 2);
    assert!(gradcheck(&n, x.view(), BATCH, STEPS, &[1, 0], &var_loss(), GradRegime::NoSpike, EPS, 1e-4).is_err());
}

#[test]
fn regularizer_pushes_overactive_unit_down() {
    // one hidden unit under constant drive; zero readout weights so only the
    // regularizer reaches it
    let settings = NeuronSettings::default();
    let mut n = net(2, &[LayerSpec::Dense { units: 1 }, LayerSpec::Dense { units: 2 }], settings, 5);
    n.layers[0].weights = vec![0.2, 0.2];
    n.layers[0].bias = vec![0.0];
    n.layers[1].weights.iter_mut().for_each(|w| *w = 0.0);
    let steps = 20;
    let x = Array2::from_elem((steps, 2), 1.0);
    let cfg = LossConfig {
        lambda_var: 1.0,
        ..LossConfig::default()
    };
    let out = backward(&n, x.view(), 1, steps, &[0], &cfg, Default::default()).unwrap();
    let mu = out.trace.rate(0);
    assert!(mu > cfg.mu_star && mu < 0.5, "rate {mu} outside the regime under test");
    let bias = out
        .grads
        .get(ParamId {
            layer: 0,
            kind: ParamKind::Bias,
        })
        .unwrap();
    assert!(bias[0] > 0.0, "bias gradient {}", bias[0]);
    // descending lowers the rate
    let mut m = n.clone();
    m.layers[0].bias[0] -= 0.05;
    let after = backward(&m, x.view(), 1, steps, &[0], &cfg, Default::default()).unwrap();
    assert!(after.trace.rate(0) <= mu);
    assert!(after.loss.variance <= out.loss.variance);
}
