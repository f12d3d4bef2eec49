//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits 0 regardless of outcome unless `LTGATE_ACCEPTANCE_STRICT=1`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{binomial_sigma, plain_lif, threshold_sweep, toy_config};
use ltgate::calibration::{calibrate, measure_rate};
use ltgate::config::ExperimentConfig;
use ltgate::data::{encode, EncodingSpec, ImageDataset, SpikeTrainBatch};
use ltgate::harness::{
    ablation_suite, build_network, build_tasks, probe_batches, run_continual, write_run, AblationTable, ContinualRun,
    Variant,
};
use ltgate::neuron::{blend, gate_blend, lif_step, CompartmentState, DecayPair, GateVector};
use ltgate::network::{LayerSpec, Network, NetworkMode, NeuronSettings, Record, Shape3};
use ltgate::train::{gradcheck, GradRegime, LossConfig};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [1, 2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(&mut self, id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f));
        let elapsed = start.elapsed();
        let mut o = result.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if let Some(b) = budget {
            if elapsed > b {
                o.pass = false;
                o.detail.push_str(&format!("; over the {:.0} s budget", b.as_secs_f64()));
            }
        }
        if !o.pass {
            self.failures += 1;
        }
        println!(
            "[{}] criterion {id:>2} {name}: {} ({:.2} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    }
}

fn dynamics() -> Outcome {
    let d = DecayPair::new(1.0, 5.0, 50.0).unwrap();
    let mut state = CompartmentState::zeros(1);
    let mut worst: f64 = 0.0;
    for t in 0..200 {
        lif_step(&mut state, &[if t == 0 { 1.0 } else { 0.0 }], &d).unwrap();
        let fast = (-(t as f64) / 5.0).exp();
        let slow = (-(t as f64) / 50.0).exp();
        worst = worst.max((state.u_fast[0] - fast).abs()).max((state.u_slow[0] - slow).abs());
    }
    let reference = CompartmentState {
        u_fast: vec![15.0],
        u_slow: vec![8.0],
    };
    let u = blend(0.7, 15.0, 8.0);
    let u_layer = gate_blend(&reference, &GateVector::constant(1, 0.7)).unwrap()[0];
    let blend_err = (u - 10.1).abs().max((u_layer - 10.1).abs());
    outcome(
        worst <= 1e-10 && blend_err <= 1e-12,
        format!("max decay error {worst:.1e}, blend {u} (error {blend_err:.1e})"),
    )
}

fn reduction() -> Outcome {
    const STEPS: usize = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spikes = Array3::from_shape_fn((100, STEPS, 20), |_| u8::from(rng.gen_bool(0.3)));
    let input = SpikeTrainBatch::new(spikes, EncodingSpec::new(300.0, 11), (0..100).collect()).unwrap();
    let settings = NeuronSettings {
        v_th: 0.8,
        ..NeuronSettings::default()
    };
    let specs = [LayerSpec::Dense { units: 16 }, LayerSpec::Dense { units: 5 }];
    let build = |mode| Network::build(Shape3::flat(20), &specs, &settings, mode, 3).unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for (mode, raw, tau) in [
        (NetworkMode::SingleFast, f64::NEG_INFINITY, 5.0),
        (NetworkMode::SingleSlow, f64::INFINITY, 50.0),
    ] {
        let frozen = build(mode);
        let mut pinned = build(NetworkMode::Ltgate);
        pinned.layers.iter_mut().for_each(|l| l.gate_raw.iter_mut().for_each(|g| *g = raw));
        let oracle = plain_lif(&frozen, input.to_rows().view(), STEPS, (-1.0f64 / tau).exp());
        let a = frozen.forward(&input, Record::Spikes).unwrap();
        let b = pinned.forward(&input, Record::Spikes).unwrap();
        let same = oracle
            .iter()
            .enumerate()
            .all(|(l, o)| a.layers[l].spikes == *o && b.layers[l].spikes == *o);
        let total: f64 = oracle.iter().map(|o| o.sum()).sum();
        pass &= same && total > 0.0;
        details.push(format!("{}: {} over {total} spikes", mode.name(), if same { "identical" } else { "differs" }));
    }
    outcome(pass, details.join(", "))
}

fn gradients() -> Outcome {
    let inputs = |features: usize, scale: f64, seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((6, features), |_| rng.gen::<f64>() * scale)
    };
    let quiet = NeuronSettings {
        v_th: 1e3,
        ..NeuronSettings::default()
    };
    let a = Network::build(Shape3::flat(5), &[LayerSpec::Dense { units: 4 }], &quiet, NetworkMode::Ltgate, 4).unwrap();
    let smooth = NeuronSettings {
        v_th: 0.45,
        surrogate_slope: 1.0,
        ..NeuronSettings::default()
    };
    let b = Network::build(
        Shape3::flat(3),
        &[LayerSpec::Dense { units: 4 }, LayerSpec::Dense { units: 2 }],
        &smooth,
        NetworkMode::Ltgate,
        21,
    )
    .unwrap();
    let loss = LossConfig {
        lambda_var: 0.1,
        ..LossConfig::default()
    };
    let x = inputs(5, 1.0, 1);
    let r1 = gradcheck(&a, x.view(), 2, 3, &[0, 3], &LossConfig::default(), GradRegime::NoSpike, 1e-6, 1e-4).unwrap();
    let x = inputs(3, 1.5, 2);
    let r2 = gradcheck(&b, x.view(), 2, 3, &[1, 0], &loss, GradRegime::SurrogateSmoothed, 1e-6, 1e-3).unwrap();
    let small = a.param_count() <= 50 && b.param_count() <= 50;
    outcome(
        r1.passed && r2.passed && small,
        format!(
            "no-spike {:.1e} ({} params), smoothed {:.1e} ({} params)",
            r1.max_rel_error(),
            a.param_count(),
            r2.max_rel_error(),
            b.param_count()
        ),
    )
}

fn calibration() -> Outcome {
    let cfg = toy_config();
    let tasks = build_tasks(&cfg).unwrap();
    let mut net = build_network(&cfg, &tasks).unwrap();
    let probe = probe_batches(&cfg, &tasks[0]).unwrap();
    let calib = cfg.calibration.to_config();
    let report = calibrate(&mut net, &probe, &calib).unwrap();
    let band = calib.band_lo..=calib.band_hi;
    let mut pass = true;
    let mut details = Vec::new();
    for (l, layer) in report.layers.iter().enumerate() {
        let rate = measure_rate(&net, &probe, l).unwrap();
        let sweep = threshold_sweep(&net, &probe, l, layer.v_th / 4.0, layer.v_th * 4.0, 161);
        let in_band: Vec<f64> = sweep.iter().filter(|(_, r)| band.contains(r)).map(|(v, _)| *v).collect();
        let step = 16.0f64.powf(1.0 / 160.0);
        let agrees = !in_band.is_empty()
            && layer.v_th >= in_band[0] / step
            && layer.v_th <= in_band[in_band.len() - 1] * step;
        pass &= band.contains(&rate) && rate == layer.rate && agrees;
        details.push(format!("layer {l} rate {rate:.4} at v_th {:.4}", layer.v_th));
    }
    let mut again = net.clone();
    let second = calibrate(&mut again, &probe, &calib).unwrap();
    let idempotent = report
        .layers
        .iter()
        .zip(&second.layers)
        .all(|(a, b)| (a.v_th - b.v_th).abs() <= a.final_interval);
    pass &= idempotent;
    details.push(format!("idempotent {idempotent}"));
    outcome(pass, details.join(", "))
}

fn encoder() -> Outcome {
    const PIXELS: usize = 64;
    const SAMPLES: usize = 8;
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for &freq in &[1000.0, 50.0, 10.0] {
        for &intensity in &[0.0, 0.25, 0.5, 1.0] {
            let ds = ImageDataset::new("flat", "test", 1, PIXELS, vec![intensity; PIXELS * SAMPLES], vec![0; SAMPLES], 1)
                .unwrap();
            let spec = EncodingSpec {
                duration_ms: 1000.0,
                ..EncodingSpec::new(freq, 17)
            };
            let batch = encode(&ds, &spec, &(0..SAMPLES).collect::<Vec<_>>()).unwrap();
            let trials = batch.spikes.len();
            let p = intensity * freq * spec.dt_ms / 1000.0;
            let empirical = batch.total_spikes() as f64 / trials as f64;
            let sigma = binomial_sigma(p, trials);
            if sigma == 0.0 {
                pass &= empirical == p;
            } else {
                let z = (empirical - p).abs() / sigma;
                worst = worst.max(z);
                pass &= z <= 3.0;
            }
        }
    }
    outcome(pass, format!("worst deviation {worst:.2} sigma over 12 cells"))
}

fn by_seed(table: &AblationTable, v: Variant, f: impl Fn(&ltgate::harness::ContinualMetrics) -> f64) -> Vec<f64> {
    SEEDS.iter().map(|&s| f(table.get(v, s).expect("ablation cell"))).collect()
}

fn fmt(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/")
}

fn continual_direction(table: &AblationTable) -> Outcome {
    let lt_f = by_seed(table, Variant::Ltgate, |m| m.forgetting);
    let sf_f = by_seed(table, Variant::SingleFast, |m| m.forgetting);
    let wins = lt_f.iter().zip(&sf_f).filter(|(a, b)| a < b).count();
    let lt_c = by_seed(table, Variant::Ltgate, |m| m.final_combined_acc);
    let sf_c = by_seed(table, Variant::SingleFast, |m| m.final_combined_acc);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let acc_ok = mean(&lt_c) >= mean(&sf_c);
    outcome(
        wins == SEEDS.len() && acc_ok,
        format!(
            "forgetting ltgate {} vs single_fast {} ({wins}/3 lower); combined acc mean {:.3} vs {:.3} (per seed {} vs {})",
            fmt(&lt_f),
            fmt(&sf_f),
            mean(&lt_c),
            mean(&sf_c),
            fmt(&lt_c),
            fmt(&sf_c)
        ),
    )
}

fn ablation_direction(table: &AblationTable) -> Outcome {
    let lt_f = by_seed(table, Variant::Ltgate, |m| m.forgetting);
    let mut pass = true;
    let mut details = Vec::new();
    for v in [Variant::SingleFast, Variant::SingleSlow] {
        let f = by_seed(table, v, |m| m.forgetting);
        let hits = f.iter().zip(&lt_f).filter(|(a, b)| a > b).count();
        pass &= hits >= 2;
        details.push(format!("{v} forgetting {} > ltgate {} in {hits}/3", fmt(&f), fmt(&lt_f)));
    }
    let lt_s = by_seed(table, Variant::Ltgate, |m| m.unit_rate_std);
    let nv_s = by_seed(table, Variant::NoVarReg, |m| m.unit_rate_std);
    let hits = nv_s.iter().zip(&lt_s).filter(|(a, b)| a >= b).count();
    pass &= hits >= 2;
    details.push(format!("no_var_reg rate std {} >= ltgate {} in {hits}/3", fmt(&nv_s), fmt(&lt_s)));
    outcome(pass, details.join("; "))
}

fn exposure_direction(table: &AblationTable) -> Outcome {
    let acc = |v| by_seed(table, v, |m| m.exposure.as_ref().expect("exposure result").accuracy);
    let (lt, sf) = (acc(Variant::Ltgate), acc(Variant::SingleFast));
    let hits = lt.iter().zip(&sf).filter(|(a, b)| a > b).count();
    outcome(hits >= 2, format!("10 Hz accuracy ltgate {} vs single_fast {} ({hits}/3 higher)", fmt(&lt), fmt(&sf)))
}

/// Spikes of `net` over every layer on each task's test set, counted from the rasters.
fn recount(cfg: &ExperimentConfig, net: &Network) -> Vec<(String, u64)> {
    build_tasks(cfg)
        .unwrap()
        .iter()
        .map(|task| {
            let idx: Vec<usize> = (0..task.test.len()).collect();
            let spikes = idx
                .chunks(cfg.training.eval_batch_size)
                .map(|c| {
                    let trace = net.forward(&encode(&task.test, &task.encoding, c).unwrap(), Record::Spikes).unwrap();
                    trace.layers.iter().map(|l| l.spikes.sum() as u64).sum::<u64>()
                })
                .sum();
            (task.name.clone(), spikes)
        })
        .collect()
}

fn spike_accounting(base: &ExperimentConfig, table: &AblationTable, runs: &[ContinualRun]) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for (row, run) in table.rows.iter().zip(runs) {
        if !matches!(row.variant, Variant::Ltgate | Variant::SingleFast) {
            continue;
        }
        let mut cfg = row.variant.apply(base);
        cfg.seed = row.seed;
        for (domain, counted) in recount(&cfg, &run.network) {
            let reported = row.metrics.final_spikes.iter().find(|s| s.domain == domain);
            pass &= reported.is_some_and(|s| s.spikes == counted);
        }
    }
    for &seed in &SEEDS {
        let lt = table.get(Variant::Ltgate, seed).unwrap();
        let sf = table.get(Variant::SingleFast, seed).unwrap();
        pass &= lt.spike_ratios.len() == lt.tasks.len();
        for r in &lt.spike_ratios {
            let own = lt.final_spikes.iter().find(|s| s.domain == r.domain).unwrap().spikes;
            let other = sf.final_spikes.iter().find(|s| s.domain == r.domain).unwrap().spikes;
            pass &= r.spikes == own && r.baseline_spikes == other && r.ratio == own as f64 / other as f64;
        }
        let ratios: Vec<String> = lt.spike_ratios.iter().map(|r| format!("{} {:.3}", r.domain, r.ratio)).collect();
        details.push(format!("seed {seed}: {}", ratios.join(", ")));
    }
    outcome(pass, format!("ltgate/single_fast spike ratio, recounted: {}", details.join("; ")))
}

fn reproducibility(base: &ExperimentConfig, table: &AblationTable, runs: &[ContinualRun]) -> Outcome {
    let i = table
        .rows
        .iter()
        .position(|r| r.variant == Variant::Ltgate && r.seed == SEEDS[0])
        .unwrap();
    let mut cfg = Variant::Ltgate.apply(base);
    cfg.seed = SEEDS[0];
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    // the suite's run carries spike ratios; compare two plain runs of the same cell
    let mut first = runs[i].clone();
    first.metrics.spike_ratios.clear();
    write_run(&a, "continual", &cfg, &first).unwrap();
    let second = run_continual(&cfg, Variant::Ltgate.name()).unwrap();
    write_run(&b, "continual", &cfg, &second).unwrap();
    let sa = std::fs::read(a.join("summary.json")).unwrap();
    let sb = std::fs::read(b.join("summary.json")).unwrap();
    outcome(sa == sb, format!("summary.json {} bytes, identical {}", sa.len(), sa == sb))
}

fn main() {
    let strict = std::env::var("LTGATE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut suite = Suite { failures: 0 };
    suite.run(1, "dynamics oracle", Some(Duration::from_secs(1)), dynamics);
    suite.run(2, "reduction equivalence", Some(Duration::from_secs(10)), reduction);
    suite.run(3, "gradient correctness", Some(Duration::from_secs(30)), gradients);
    suite.run(4, "calibration", Some(Duration::from_secs(60)), calibration);
    suite.run(5, "encoder statistics", Some(Duration::from_secs(30)), encoder);

    let base = toy_config();
    let start = Instant::now();
    let (table, runs) = ablation_suite(&base, &SEEDS, &Variant::ALL).expect("ablation runs");
    let ablation_time = start.elapsed();
    println!(
        "ablation: {} runs over seeds {SEEDS:?} in {:.1} s",
        runs.len(),
        ablation_time.as_secs_f64()
    );
    let within = |o: Outcome, budget: Duration| {
        if ablation_time > budget {
            outcome(false, format!("{}; ablation over the {:.0} s budget", o.detail, budget.as_secs_f64()))
        } else {
            o
        }
    };
    suite.run(6, "continual-learning direction", None, || {
        within(continual_direction(&table), Duration::from_secs(30 * 60))
    });
    suite.run(7, "ablation directions", None, || ablation_direction(&table));
    suite.run(8, "unsupervised exposure direction", None, || exposure_direction(&table));
    suite.run(9, "spike accounting", None, || spike_accounting(&base, &table, &runs));
    suite.run(10, "reproducibility", None, || reproducibility(&base, &table, &runs));

    println!("{} of 10 criteria failed", suite.failures);
    if strict && suite.failures > 0 {
        std::process::exit(1);
    }
}
