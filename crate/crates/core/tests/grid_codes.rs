use num_complex::Complex64;
use p2h_core::grid_codes::*;
use p2h_core::rectifier::{synthesize_ac_waveform, ElectrolyzerModel, HarmonicPhasor, DEFAULT_SAMPLES};
use proptest::prelude::*;

fn pcc(s_sc: f64) -> PccSpec {
    PccSpec { rated_voltage: 10e3, s_sc, s_gb: 100e6, mode: LimitMode::Gbt14549, max_demand_current: None }
}

#[test]
fn gbt_scaling() {
    let t = HarmonicLimitTable::gbt14549_10kv();
    assert_eq!(harmonic_limit(&pcc(200e6), &t, 23).unwrap(), 9.0);
    assert_eq!(harmonic_limit(&pcc(100e6), &t, 23).unwrap(), 4.5);
    assert!((harmonic_limit(&pcc(3900e6), &t, 25).unwrap() - 39.0 * 4.1).abs() < 1e-12);
    assert!(matches!(harmonic_limit(&pcc(200e6), &t, 47), Err(GridCodeError::MissingEntry(47))));
}

#[test]
fn ieee_mode_uses_demand_current() {
    let p = PccSpec { mode: LimitMode::Ieee519, max_demand_current: Some(500.0), ..pcc(200e6) };
    let ratio = p.short_circuit_ratio().unwrap();
    assert!(ratio > 20.0 && ratio < 50.0);
    let t = HarmonicLimitTable::ieee519(ratio);
    assert!((harmonic_limit(&p, &t, 23).unwrap() - 5.0).abs() < 1e-12);
    assert!((harmonic_limit(&p, &t, 47).unwrap() - 2.5).abs() < 1e-12);
}

#[test]
fn aggregation_basics() {
    let a = HarmonicPhasor::new(23, Complex64::new(3.0, 4.0));
    let b = HarmonicPhasor::new(23, Complex64::new(-3.0, -4.0));
    assert_eq!(aggregate_phasors(&[a, b]).unwrap().magnitude(), 0.0);
    assert_eq!(aggregate_phasors(&[a]).unwrap(), a);
    assert!(matches!(aggregate_phasors(&[a, HarmonicPhasor::zero(25)]), Err(GridCodeError::MixedOrders(23, 25))));
    assert!(matches!(aggregate_phasors(&[]), Err(GridCodeError::Empty)));
}

#[test]
fn identical_electrolyzers_add_up_like_their_waveforms() {
    let m = ElectrolyzerModel::default();
    let n = 3;
    let single = m.pcc_phasor(4200.0, 23).unwrap();
    let agg = aggregate_phasors(&vec![single; n]).unwrap();
    assert!((agg.value - single.value * n as f64).norm() < 1e-12);
    let op = m.operating_point(4200.0).unwrap();
    let w = synthesize_ac_waveform(&op, DEFAULT_SAMPLES).unwrap();
    let summed = p2h_core::rectifier::Waveform { samples: w.samples.iter().map(|v| v * n as f64).collect() };
    let fft = summed.spectrum().phasor(23).unwrap();
    assert!((fft.magnitude() - agg.magnitude()).abs() / agg.magnitude() < 1e-3);
}

#[test]
fn zero_harmonics_are_compliant() {
    let t = HarmonicLimitTable::gbt14549_10kv();
    let r = check_compliance(&[HarmonicPhasor::zero(1), HarmonicPhasor::zero(23)], &pcc(200e6), &t).unwrap();
    assert!(r.compliant);
    assert_eq!(r.thd, 0.0);
}

#[test]
fn ideal_single_rectifier_thd() {
    let t = HarmonicLimitTable::gbt14549_10kv();
    let mut ph = vec![HarmonicPhasor::new(1, Complex64::new(1.0, 0.0))];
    for h in [23u32, 25, 47, 49] {
        ph.push(HarmonicPhasor::new(h, Complex64::new(1.0 / h as f64, 0.0)));
    }
    let r = check_compliance(&ph, &pcc(200e6), &t).unwrap();
    let expected = [23.0f64, 25.0, 47.0, 49.0].iter().map(|h| 1.0 / (h * h)).sum::<f64>().sqrt();
    assert!((r.thd - expected).abs() < 1e-12);
    assert!((r.thd - 0.0660).abs() < 5e-4, "{}", r.thd);
}

#[test]
fn one_violation_fails_overall() {
    let t = HarmonicLimitTable::gbt14549_10kv();
    let ph = [HarmonicPhasor::new(23, Complex64::new(9.5, 0.0)), HarmonicPhasor::new(25, Complex64::new(1.0, 0.0))];
    let r = check_compliance(&ph, &pcc(200e6), &t).unwrap();
    assert!(!r.compliant);
    assert_eq!(r.violations().count(), 1);
    assert_eq!(r.orders.iter().find(|o| o.order == 25).unwrap().compliant, true);
}

#[test]
fn table_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("limits.toml");
    let t = HarmonicLimitTable::gbt14549_10kv();
    std::fs::write(&path, t.to_toml()).unwrap();
    assert_eq!(HarmonicLimitTable::load(&path).unwrap(), t);
    std::fs::write(&path, "[[limit]]\norder = 23\nvalue = -1.0\n").unwrap();
    assert!(matches!(HarmonicLimitTable::load(&path), Err(GridCodeError::InvalidTable(_))));
}

fn phasor() -> impl Strategy<Value = HarmonicPhasor> {
    (-10.0f64..10.0, -10.0f64..10.0).prop_map(|(re, im)| HarmonicPhasor::new(23, Complex64::new(re, im)))
}

proptest! {
    #[test]
    fn aggregation_is_linear(a in prop::collection::vec(phasor(), 1..6), b in prop::collection::vec(phasor(), 1..6)) {
        let all: Vec<_> = a.iter().chain(&b).copied().collect();
        let lhs = aggregate_phasors(&all).unwrap().value;
        let rhs = aggregate_phasors(&a).unwrap().value + aggregate_phasors(&b).unwrap().value;
        prop_assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn gbt_limits_homogeneous_in_short_circuit_capacity(k in 0.1f64..50.0) {
        let t = HarmonicLimitTable::gbt14549_10kv();
        for h in [23u32, 25] {
            let base = harmonic_limit(&pcc(200e6), &t, h).unwrap();
            let scaled = harmonic_limit(&pcc(200e6 * k), &t, h).unwrap();
            prop_assert!((scaled - k * base).abs() < 1e-9 * scaled);
        }
    }

    #[test]
    fn removing_a_co_phased_source_keeps_compliance(mags in prop::collection::vec(0.0f64..4.0, 1..6), phase in 0.0f64..6.28) {
        let t = HarmonicLimitTable::gbt14549_10kv();
        let ph: Vec<_> = mags.iter().map(|&m| HarmonicPhasor::new(23, Complex64::from_polar(m, phase))).collect();
        let full = check_compliance(&[aggregate_phasors(&ph).unwrap()], &pcc(200e6), &t).unwrap();
        if ph.len() > 1 {
            let fewer = check_compliance(&[aggregate_phasors(&ph[1..]).unwrap()], &pcc(200e6), &t).unwrap();
            prop_assert!(!full.compliant || fewer.compliant);
        }
    }
}
