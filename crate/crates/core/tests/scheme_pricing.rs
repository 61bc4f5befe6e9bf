//! Integration checks of the recursive scheme against independent oracles.

mod common;

use std::sync::Arc;

use pathwise_core::lattice::{GridSpec, LocalVolModel};
use pathwise_core::partition::PartitionHierarchy;
use pathwise_core::path::Flavor;
use pathwise_core::payoff::PayoffSpec;
use pathwise_core::scheme::{build_scheme, FixingSchedule, RollOutcome, SchemeConfig};

// frozen in tests/fixtures/asian_mc_oracle.json
const ASIAN_VALUE: f64 = 6.3057586665627;
const ASIAN_SE: f64 = 0.010189479799623;

fn setup(sigma: f64) -> (Arc<LocalVolModel>, Arc<FixingSchedule>) {
    let model = Arc::new(LocalVolModel::constant_1d(Flavor::Positive, sigma * sigma).unwrap());
    let hierarchy = PartitionHierarchy::new(1.0, 14).unwrap();
    let schedule = Arc::new(FixingSchedule::new(hierarchy, &[0.0, 0.5, 1.0]).unwrap());
    (model, schedule)
}

#[test]
fn asian_two_fixing_price_matches_monte_carlo() {
    let (model, schedule) = setup(0.2);
    let payoff = Arc::new(PayoffSpec::parse("(call (avg x1 x2) 100)", 0.0, 1.0).unwrap());
    let grid = GridSpec::centered(&model, &[100.0], 1.0, 6.0, 801, 400).unwrap();
    let config = Arc::new(SchemeConfig::new(grid));
    let scheme = build_scheme(model, schedule, payoff, vec![vec![100.0]], config).unwrap();
    let price = scheme.value(0.0, &[100.0]).unwrap();
    let tol = 3.0 * ASIAN_SE + 0.003 * ASIAN_VALUE;
    assert!(
        (price - ASIAN_VALUE).abs() <= tol,
        "scheme {price} vs oracle {ASIAN_VALUE} (tol {tol})"
    );
    // nonnegative payoff: the chained surface inherits the maximum principle
    let f_inf = scheme
        .grid()
        .terminal_slice()
        .iter()
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    let min_v = scheme
        .grid()
        .start_slice()
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v));
    assert!(min_v >= -1e-8 * f_inf, "min {min_v} vs eps {}", 1e-8 * f_inf);
}

#[test]
fn asian_value_continuity_at_roll_against_re_solve() {
    // the rolled surface agrees with the pre-roll surface at the observed
    // fixing; verified both with and without memoization
    let (model, schedule) = setup(0.2);
    let payoff = Arc::new(PayoffSpec::parse("(call (avg x1 x2) 100)", 0.0, 1.0).unwrap());
    let grid = GridSpec::centered(&model, &[100.0], 1.0, 6.0, 401, 200).unwrap();
    let mut plain = SchemeConfig::new(grid.clone());
    plain.memoize = false;
    for config in [SchemeConfig::new(grid), plain] {
        let scheme = build_scheme(
            model.clone(),
            schedule.clone(),
            payoff.clone(),
            vec![vec![100.0]],
            Arc::new(config),
        )
        .unwrap();
        for observed in [92.0, 100.0, 113.0] {
            let before = scheme.value(0.5, &[observed]).unwrap();
            let rolled = match scheme.roll_fixing(&[observed]).unwrap() {
                RollOutcome::Next(s) => s,
                RollOutcome::Settled { .. } => unreachable!(),
            };
            let after = rolled.value(0.5, &[observed]).unwrap();
            let h = rolled.grid().axes()[0].step();
            let tol = 10.0 * (h * h) * 100.0 + 1e-3;
            assert!(
                (before - after).abs() <= tol,
                "gap {} vs tol {tol} at fixing {observed}",
                (before - after).abs()
            );
        }
    }
}

#[test]
fn tower_property_collapses_to_single_interval() {
    // a payoff reading only the terminal fixing prices identically whether
    // solved on one interval or chained across four
    let sigma = 0.2f64;
    let model = Arc::new(LocalVolModel::constant_1d(Flavor::Positive, sigma * sigma).unwrap());
    let hierarchy = PartitionHierarchy::new(1.0, 14).unwrap();
    let grid = GridSpec::centered(&model, &[100.0], 1.0, 6.0, 401, 256).unwrap();
    let config = Arc::new(SchemeConfig::new(grid));

    let single = {
        let schedule = Arc::new(FixingSchedule::new(hierarchy, &[0.0, 1.0]).unwrap());
        let payoff = Arc::new(PayoffSpec::parse("(call x1 100)", 0.0, 1.0).unwrap());
        build_scheme(model.clone(), schedule, payoff, vec![vec![100.0]], config.clone()).unwrap()
    };
    let chained = {
        let schedule =
            Arc::new(FixingSchedule::new(hierarchy, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap());
        let payoff = Arc::new(PayoffSpec::parse("(call x4 100)", 0.0, 1.0).unwrap());
        build_scheme(model, schedule, payoff, vec![vec![100.0]], config).unwrap()
    };
    let a = single.value(0.0, &[100.0]).unwrap();
    let b = chained.value(0.0, &[100.0]).unwrap();
    assert!((a - b).abs() <= 1e-6, "single {a} vs chained {b}");
    // whole start slices agree node-wise
    for (u, v) in single
        .grid()
        .start_slice()
        .iter()
        .zip(chained.grid().start_slice())
    {
        assert!((u - v).abs() <= 1e-6 * v.abs().max(1.0));
    }
}
