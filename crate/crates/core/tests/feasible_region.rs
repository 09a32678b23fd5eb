use p2h_core::feasible_region::*;
use p2h_core::milp::{BranchAndBound, Direction, LinExpr, MilpBackend, MilpModel, SolveError, SolveOptions};
use p2h_core::rectifier::ElectrolyzerModel;
use proptest::prelude::*;

fn two_elz() -> ElectrolyzerModel {
    ElectrolyzerModel::default()
}

#[test]
fn pair_grid_is_symmetric_with_one_infeasible_band() {
    let m = two_elz();
    for (h, limit) in [(23, 9.0), (25, 8.2)] {
        let grid = sweep_pair(&m, h, limit, 50.0).unwrap();
        assert_eq!(grid.size(), 101);
        assert!(grid.is_symmetric());
        assert!(grid.infeasible_connected());
        let frac = grid.infeasible_fraction();
        assert!(frac > 0.05 && frac < 0.5, "order {h}: infeasible fraction {frac}");
    }
}

#[test]
fn fitted_rules_are_sound_on_dense_grids() {
    let m = two_elz();
    for (h, limit) in [(23, 9.0), (25, 8.2)] {
        let (th, grid, report) = fit_order(&m, h, limit, 2, &RegionOptions::default()).unwrap();
        assert_eq!(report.false_feasible, 0);
        assert_eq!(verify_thresholds(&th, &m, 301).unwrap().false_feasible, 0);
        assert!(report.worst_admitted <= th.pair_limit);
        // the medium interval covers every sampled infeasible point
        for i in 0..grid.size() {
            for j in 0..grid.size() {
                if !grid.feasible(i, j) {
                    assert!(!th.admits(grid.axis[i], grid.axis[j]));
                }
            }
        }
        assert!(th.has_low() && th.has_high() && !th.conservative);
        assert_eq!(th.n_bar, 1);
    }
}

#[test]
fn auto_comply_count_scales_with_the_limit() {
    let m = two_elz();
    let worst = max_single_magnitude(&m, 23).unwrap();
    assert_eq!(auto_comply_count_for(worst, 3.0 * worst), 3);
    assert_eq!(auto_comply_count_for(worst, 3.0 * worst - 1e-6), 2);
    assert_eq!(compute_auto_comply_count(&m, 23, 9.0).unwrap(), (9.0 / worst).floor() as u32);
    let mut far = m.clone();
    far.pcc_voltage = 220e3;
    assert_eq!(compute_auto_comply_count(&far, 23, 3900.0 / 2000.0 * 2.1).unwrap(), 15);
}

#[test]
fn lone_electrolyzer_above_pair_budget_is_rejected() {
    let err = fit_order(&two_elz(), 23, 9.0, 4, &RegionOptions::default()).unwrap_err();
    assert!(matches!(err, RegionError::LoneExceeds { order: 23, .. }));
    assert!(fit_order(&two_elz(), 23, 9.0, 3, &RegionOptions::default()).is_err());
}

#[test]
fn generous_limit_gives_vacuous_rules() {
    let (th, _, _) = fit_order(&two_elz(), 23, 100.0, 2, &RegionOptions::default()).unwrap();
    assert!(th.is_vacuous());
    assert!(th.admits(4000.0, 4000.0));
}

#[test]
fn thresholds_round_trip_through_toml() {
    let m = two_elz();
    let (region, reports) = fit_region(&m, &[(23, 9.0), (25, 8.2)], 2, &RegionOptions::default()).unwrap();
    assert_eq!(reports.len(), 2);
    let back = RegionThresholds::parse(&region.to_toml(), "mem").unwrap();
    assert_eq!(region, back);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rules.toml");
    region.save(&path).unwrap();
    assert_eq!(RegionThresholds::load(&path).unwrap(), region);
}

#[test]
fn heatmap_csv_lists_every_pair() {
    let grid = sweep_pair(&two_elz(), 23, 9.0, 100.0).unwrap();
    let mut buf = Vec::new();
    grid.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "i1_A,i2_A,magnitude_A,feasible");
    assert_eq!(text.lines().count(), 1 + 51 * 51);
}

#[test]
fn allowed_intervals_respect_the_cap() {
    let m = two_elz();
    let cap = 4.0;
    let iv = allowed_current_intervals(&m, 23, cap, 1.0).unwrap();
    assert!(!iv.is_empty());
    for [lo, hi] in iv {
        let mut i = lo;
        while i <= hi {
            assert!(m.pcc_phasor(i, 23).unwrap().magnitude() <= cap);
            i += 10.0;
        }
    }
}

fn region_2elz() -> RegionThresholds {
    fit_region(&two_elz(), &[(23, 9.0), (25, 8.2)], 2, &RegionOptions::default()).unwrap().0
}

/// Whether the emitted rules accept two running electrolyzers at fixed currents.
fn milp_accepts(region: &RegionThresholds, i1: f64, i2: f64) -> bool {
    let mut milp = MilpModel::new();
    let elz: Vec<ElzVars> = [i1, i2]
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let on = milp.add_binary(format!("on{k}"));
            milp.set_bounds(on, 1.0, 1.0);
            let current = milp.add_continuous(format!("i{k}"), i / 1e3, i / 1e3);
            ElzVars { on, current }
        })
        .collect();
    emit_milp_rules(&mut milp, region, &elz, 1e3, "t0");
    milp.set_objective(Direction::Maximize, LinExpr::new());
    match BranchAndBound::default().solve(&milp, &SolveOptions::default()) {
        Ok(_) => true,
        Err(SolveError::Infeasible { .. }) => false,
        Err(e) => panic!("{e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn emitted_rules_match_the_threshold_predicate(a in 0u32..500, b in 0u32..500) {
        let region = region_2elz();
        let (i1, i2) = (2005.0 + 10.0 * a as f64, 2005.0 + 10.0 * b as f64);
        prop_assume!(i1 <= 7000.0 && i2 <= 7000.0);
        prop_assert_eq!(milp_accepts(&region, i1, i2), region.admits(&[i1, i2]));
    }
}

#[test]
fn emitted_rules_reject_a_medium_pair_close_together() {
    let region = region_2elz();
    assert!(!milp_accepts(&region, 3500.0, 3600.0));
    assert!(milp_accepts(&region, 3000.0, 4000.0));
    assert!(milp_accepts(&region, 6000.0, 6100.0));
}

#[test]
fn rules_only_bind_above_the_auto_compliant_count() {
    let region = region_2elz();
    assert!(region.admits(&[3500.0, 0.0]));
    assert!(!region.admits(&[3500.0, 3550.0]));
}
