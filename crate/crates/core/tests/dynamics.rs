use ltgate::neuron::{
    blend, fire_and_reset, gate_blend, lif_step, logistic, CompartmentState, DecayPair, GateVector, ThresholdConfig,
};
use proptest::prelude::*;

fn decays() -> DecayPair {
    DecayPair::new(1.0, 5.0, 50.0).unwrap()
}

/// Subthreshold response of both compartments to a current sequence.
fn respond(currents: &[f64]) -> Vec<(f64, f64)> {
    let d = decays();
    let mut state = CompartmentState::zeros(1);
    currents
        .iter()
        .map(|&i| {
            lif_step(&mut state, &[i], &d).unwrap();
            (state.u_fast[0], state.u_slow[0])
        })
        .collect()
}

#[test]
fn single_impulse_decays_geometrically() {
    let mut input = vec![0.0; 200];
    input[0] = 1.0;
    for (t, (uf, us)) in respond(&input).into_iter().enumerate() {
        let fast = (-(t as f64) / 5.0).exp();
        let slow = (-(t as f64) / 50.0).exp();
        assert!((uf - fast).abs() <= 1e-10, "fast at {t}: {uf} vs {fast}");
        assert!((us - slow).abs() <= 1e-10, "slow at {t}: {us} vs {slow}");
    }
}

#[test]
fn blend_of_reference_membranes() {
    assert!((blend(0.7, 15.0, 8.0) - 10.1).abs() < 1e-12);
    let state = CompartmentState {
        u_fast: vec![15.0],
        u_slow: vec![8.0],
    };
    let u = gate_blend(&state, &GateVector::constant(1, 0.7)).unwrap();
    assert!((u[0] - 10.1).abs() < 1e-12);
}

#[test]
fn impulses_eight_steps_apart() {
    let mut input = vec![0.0; 20];
    input[0] = 1.0;
    input[8] = 1.0;
    let r = respond(&input);
    let (peak_f, peak_s) = r[0];
    // just before the second impulse
    let (f, s) = r[7];
    assert!(f / peak_f < 0.3, "fast kept {}", f / peak_f);
    assert!(s / peak_s > 0.8, "slow kept {}", s / peak_s);
    // the slow compartment stacks both impulses, the fast one barely does
    assert!(r[8].1 > 1.8 && r[8].0 < 1.3);
}

#[test]
fn gate_extremes_select_one_compartment() {
    let state = CompartmentState {
        u_fast: vec![3.0, -2.0],
        u_slow: vec![7.0, 0.5],
    };
    assert_eq!(gate_blend(&state, &GateVector::constant(2, 0.0)).unwrap(), state.u_fast);
    assert_eq!(gate_blend(&state, &GateVector::constant(2, 1.0)).unwrap(), state.u_slow);
}

proptest! {
    #[test]
    fn subthreshold_dynamics_are_linear(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        x in prop::collection::vec(-1.0f64..1.0, 30),
        y in prop::collection::vec(-1.0f64..1.0, 30),
    ) {
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (rx, ry, rm) = (respond(&x), respond(&y), respond(&mixed));
        for t in 0..30 {
            let fast = a * rx[t].0 + b * ry[t].0;
            let slow = a * rx[t].1 + b * ry[t].1;
            prop_assert!((rm[t].0 - fast).abs() < 1e-9);
            prop_assert!((rm[t].1 - slow).abs() < 1e-9);
        }
    }

    #[test]
    fn reset_lowers_both_compartments_by_threshold(
        uf in -5.0f64..20.0,
        us in -5.0f64..20.0,
        gamma in 0.0f64..=1.0,
        v_th in 0.1f64..10.0,
    ) {
        let mut state = CompartmentState { u_fast: vec![uf], u_slow: vec![us] };
        let gates = GateVector::constant(1, gamma);
        let before = gate_blend(&state, &gates).unwrap()[0];
        let out = fire_and_reset(&mut state, &gates, &ThresholdConfig::new(v_th).unwrap()).unwrap();
        let after = gate_blend(&state, &gates).unwrap()[0];
        prop_assert_eq!(out.spikes[0], if before >= v_th { 1.0 } else { 0.0 });
        let drop = v_th * out.spikes[0];
        prop_assert!((state.u_fast[0] - (uf - drop)).abs() < 1e-12);
        prop_assert!((state.u_slow[0] - (us - drop)).abs() < 1e-12);
        prop_assert!((before - after - drop).abs() < 1e-9);
    }

    #[test]
    fn gates_stay_in_unit_interval(raw in -700.0f64..700.0) {
        let g = logistic(raw);
        prop_assert!((0.0..=1.0).contains(&g));
    }
}
