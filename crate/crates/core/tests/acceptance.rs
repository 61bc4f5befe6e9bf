//! Acceptance suite: every release-gating criterion as one test with one
//! pass/fail line. Tolerances are pinned here, in code.
//!
//! Run with `cargo test -p pathwise-core --release --test acceptance --
//! --nocapture` to see the lines; the determinism criterion lives in the
//! CLI crate's `acceptance_determinism` test.

mod common;

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use pathwise_core::analytic;
use pathwise_core::functional::{
    asian_call_functional, ftvp_residual, functional_hedge_check, AsianGridSpec,
};
use pathwise_core::hedge::{
    generate_path, hedge_ensemble, median_abs, no_arbitrage_probe, NoArbVerdict,
    PathGeneratorSpec,
};
use pathwise_core::lattice::{
    maximum_principle_check, solve_tvp, GridSpec, LocalVolModel,
};
use pathwise_core::partition::PartitionHierarchy;
use pathwise_core::path::Flavor;
use pathwise_core::pathcalc::ito_identity_residual_cross;
use pathwise_core::payoff::PayoffSpec;
use pathwise_core::rng::path_rng;
use pathwise_core::scheme::{build_scheme, FixingSchedule, SchemeConfig, SchemeSolution};

// frozen in tests/fixtures/asian_mc_oracle.json (10^6 exact log-normal
// paths, seed 2024)
const ASIAN_MC_VALUE: f64 = 6.3057586665627;
const ASIAN_MC_SE: f64 = 0.010189479799623;

fn verdict(criterion: &str, pass: bool, detail: &str, started: Instant) {
    println!(
        "ACCEPTANCE {criterion}: {} — {detail} [{:.1}s]",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    assert!(pass, "{criterion}: {detail}");
}

fn positive_model(variance: f64) -> Arc<LocalVolModel> {
    Arc::new(LocalVolModel::constant_1d(Flavor::Positive, variance).unwrap())
}

fn bs_call_scheme(nodes: usize, steps: usize, span: f64) -> (Arc<LocalVolModel>, SchemeSolution) {
    let model = positive_model(0.04);
    let hierarchy = PartitionHierarchy::new(1.0, 14).unwrap();
    let schedule = Arc::new(FixingSchedule::new(hierarchy, &[0.0, 1.0]).unwrap());
    let payoff = Arc::new(PayoffSpec::parse("(call x1 100)", 0.0, 1.0).unwrap());
    let grid = GridSpec::centered(&model, &[100.0], 1.0, span, nodes, steps).unwrap();
    let config = Arc::new(SchemeConfig::new(grid));
    let scheme =
        build_scheme(model.clone(), schedule, payoff, vec![vec![100.0]], config).unwrap();
    (model, scheme)
}

#[test]
fn acceptance_01_discrete_quadratic_identity() {
    let started = Instant::now();
    // 100 seeded two-asset paths, levels {10, 12, 14}, all pairs, a fixed
    // strike matrix; the identity is exact algebra at every node
    let model = Arc::new(LocalVolModel::constant_2d(Flavor::Positive, 0.04, 0.09, 0.5).unwrap());
    let generator = PathGeneratorSpec::new(model, 14, 1, 100, vec![100.0, 50.0], 1.0).unwrap();
    let worst = (0..100u64)
        .into_par_iter()
        .map(|index| {
            let path = generate_path(&generator, index).unwrap();
            let mut worst = 0.0f64;
            for level in [10u32, 12, 14] {
                for (i, j) in [(0usize, 0usize), (0, 1), (1, 1)] {
                    for strike in [0.0, 100.0, -50.0] {
                        let r = ito_identity_residual_cross(&path, level, i, j, strike).unwrap();
                        worst = worst.max(r);
                    }
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    verdict(
        "1 (discrete quadratic identity)",
        worst <= 1e-10,
        &format!("max relative residual {worst:.3e} <= 1e-10 over 100 paths x 3 levels x 9 cases"),
        started,
    );
}

#[test]
fn acceptance_02_heat_equation_oracle() {
    let started = Instant::now();
    let model = Arc::new(LocalVolModel::constant_1d(Flavor::WholeSpace, 2.0).unwrap());
    // pinned grid: 801 nodes x 400 steps on [-10, 10], t in [0.5, 1]
    let spec = GridSpec::new_1d(-10.0, 10.0, 801, 400).unwrap();
    let solution = solve_tvp(&model, &|x| x[0] * x[0], 0.5, 1.0, &spec).unwrap();
    let mut max_error = 0.0f64;
    for k in 0..801 {
        let x = solution.axes()[0].coord(k);
        if solution.in_eval_region(0.5, &[x]) {
            let truth = analytic::heat_quadratic(0.5, x, 1.0);
            max_error = max_error.max((solution.start_slice()[k] - truth).abs());
        }
    }

    // three-grid Richardson order on solution differences under simultaneous
    // refinement (the closed-form limit cancels)
    let mut starts = Vec::new();
    for (nodes, steps) in [(201usize, 100usize), (401, 200), (801, 400)] {
        let spec = GridSpec::new_1d(-10.0, 10.0, nodes, steps).unwrap();
        let sol = solve_tvp(&model, &|x| x[0] * x[0], 0.5, 1.0, &spec).unwrap();
        starts.push((nodes, sol));
    }
    let diff_norm = |coarse: &(usize, pathwise_core::lattice::GridSolution),
                     fine: &(usize, pathwise_core::lattice::GridSolution)| {
        let stride = (fine.0 - 1) / (coarse.0 - 1);
        let mut worst = 0.0f64;
        for k in 0..coarse.0 {
            let x = coarse.1.axes()[0].coord(k);
            if x.abs() <= 6.0 {
                let d = (coarse.1.start_slice()[k] - fine.1.start_slice()[k * stride]).abs();
                worst = worst.max(d);
            }
        }
        worst
    };
    let d1 = diff_norm(&starts[0], &starts[1]);
    let d2 = diff_norm(&starts[1], &starts[2]);
    let order = (d1 / d2).log2();
    let pass = max_error <= 1e-3 && (1.8..=2.2).contains(&order);
    verdict(
        "2 (heat-equation oracle)",
        pass,
        &format!("max error {max_error:.3e} <= 1e-3, Richardson order {order:.3} in [1.8, 2.2]"),
        started,
    );
}

#[test]
fn acceptance_03_black_scholes_oracle() {
    let started = Instant::now();
    let sigma = 0.2f64;
    let model = positive_model(sigma * sigma);
    let spec = GridSpec::centered(&model, &[100.0], 1.0, 6.0, 801, 400).unwrap();
    let solution = solve_tvp(&model, &|x| (x[0] - 100.0).max(0.0), 0.0, 1.0, &spec).unwrap();
    let price = solution.value(0.0, &[100.0]).unwrap();
    let delta = solution.gradient(0.0, &[100.0]).unwrap()[0];
    let price_truth = analytic::black_scholes_call(100.0, 100.0, sigma, 1.0);
    let delta_truth = analytic::black_scholes_delta(100.0, 100.0, sigma, 1.0);
    let price_rel = (price - price_truth).abs() / price_truth;
    let delta_err = (delta - delta_truth).abs();
    let pass = price_rel <= 0.002 && delta_err <= 0.005;
    verdict(
        "3 (Black-Scholes oracle)",
        pass,
        &format!(
            "price {price:.4} vs {price_truth:.4} (rel {price_rel:.2e} <= 2e-3), delta {delta:.4} vs {delta_truth:.4} (abs {delta_err:.2e} <= 5e-3)"
        ),
        started,
    );
}

#[test]
fn acceptance_04_recursive_scheme_martingale_and_asian() {
    let started = Instant::now();
    let model = positive_model(0.04);
    let hierarchy = PartitionHierarchy::new(1.0, 14).unwrap();
    let schedule = Arc::new(FixingSchedule::new(hierarchy, &[0.0, 0.5, 1.0]).unwrap());
    let grid = GridSpec::centered(&model, &[100.0], 1.0, 6.0, 801, 400).unwrap();
    let config = Arc::new(SchemeConfig::new(grid));

    // terminal-spot payoff prices at par
    let spot_payoff = Arc::new(PayoffSpec::parse("x2", 0.0, 1.0).unwrap());
    let scheme_spot = build_scheme(
        model.clone(),
        schedule.clone(),
        spot_payoff,
        vec![vec![100.0]],
        config.clone(),
    )
    .unwrap();
    let par = scheme_spot.value(0.0, &[100.0]).unwrap();
    let par_rel = (par - 100.0).abs() / 100.0;

    // two-fixing average call against the frozen Monte-Carlo fixture
    let asian_payoff = Arc::new(PayoffSpec::parse("(call (avg x1 x2) 100)", 0.0, 1.0).unwrap());
    let scheme_asian =
        build_scheme(model, schedule, asian_payoff, vec![vec![100.0]], config).unwrap();
    let asian = scheme_asian.value(0.0, &[100.0]).unwrap();
    let asian_tol = 3.0 * ASIAN_MC_SE + 0.003 * ASIAN_MC_VALUE;
    let asian_err = (asian - ASIAN_MC_VALUE).abs();

    let pass = par_rel <= 0.002 && asian_err <= asian_tol;
    verdict(
        "4 (recursive-scheme martingale and Asian price)",
        pass,
        &format!(
            "par value {par:.4} (rel {par_rel:.2e} <= 2e-3); Asian {asian:.4} vs oracle {ASIAN_MC_VALUE:.4} (err {asian_err:.2e} <= {asian_tol:.2e})"
        ),
        started,
    );
}

#[test]
fn acceptance_05_hedging_replication() {
    let started = Instant::now();
    let (model, scheme) = bs_call_scheme(801, 400, 10.0);
    let generator = PathGeneratorSpec::new(model, 14, 2025, 200, vec![100.0], 1.0).unwrap();
    let mut medians = Vec::new();
    for level in [10u32, 12, 14] {
        let summaries = hedge_ensemble(&generator, &scheme, level).unwrap();
        let errors: Vec<f64> = summaries.iter().map(|s| s.replication_error).collect();
        medians.push(median_abs(&errors));
    }
    let pass = medians[2] <= 0.01 * 100.0 && medians[2] < medians[1] && medians[1] < medians[0];
    verdict(
        "5 (hedging replication)",
        pass,
        &format!(
            "median |V(T) - payoff| at levels 10/12/14 = {:.4}/{:.4}/{:.4} (level 14 <= 1.0, strictly decreasing)",
            medians[0], medians[1], medians[2]
        ),
        started,
    );
}

#[test]
fn acceptance_06_robustness_sign() {
    let started = Instant::now();
    let (model, scheme) = bs_call_scheme(801, 400, 10.0);
    let tolerance = 0.001 * 100.0;
    let mut freqs = Vec::new();
    for kappa in [0.64, 1.44] {
        let generator = PathGeneratorSpec::new(model.clone(), 12, 77, 200, vec![100.0], 1.0)
            .unwrap()
            .with_kappa(kappa)
            .unwrap();
        let summaries = hedge_ensemble(&generator, &scheme, 12).unwrap();
        let shortfalls = summaries
            .iter()
            .filter(|s| s.replication_error < -tolerance)
            .count();
        freqs.push(shortfalls as f64 / summaries.len() as f64);
    }
    let pass = freqs[0] <= 0.01 && freqs[1] > freqs[0];
    verdict(
        "6 (robustness sign)",
        pass,
        &format!(
            "shortfall frequency at kappa 0.64 = {:.3} <= 0.01, at kappa 1.44 = {:.3} (strictly greater)",
            freqs[0], freqs[1]
        ),
        started,
    );
}

#[test]
fn acceptance_07_maximum_principle_and_positivity() {
    let started = Instant::now();
    let mut rng = path_rng(7, 0);
    let mut worst_ratio = 0.0f64;
    let mut all_pass = true;
    for case in 0..50 {
        let a = rng.gen_range(0.5..3.0);
        let model = Arc::new(LocalVolModel::constant_1d(Flavor::WholeSpace, a).unwrap());
        let spec = GridSpec::new_1d(-8.0, 8.0, 201, 60).unwrap();
        let terminal =
            pathwise_core::lattice::checks::random_nonnegative_terminal(-8.0, 8.0, &mut rng);
        let report = maximum_principle_check(&model, &terminal, 0.0, 0.5, &spec).unwrap();
        if !report.pass || (report.positivity_applicable && !report.positivity_pass) {
            all_pass = false;
            eprintln!("case {case}: min {} epsilon {}", report.min_value, report.epsilon);
        }
        if report.epsilon > 0.0 {
            worst_ratio = worst_ratio.max(-report.min_value / report.epsilon);
        }
    }
    // interior hat bump spreads strict positivity everywhere
    let model = Arc::new(LocalVolModel::constant_1d(Flavor::WholeSpace, 2.0).unwrap());
    let spec = GridSpec::new_1d(80.0, 120.0, 401, 100).unwrap();
    let hat = |x: &[f64]| (1.0 - ((x[0] - 100.0) / 5.0).abs()).max(0.0);
    let bump = maximum_principle_check(&model, &hat, 0.0, 0.5, &spec).unwrap();
    let pass = all_pass && bump.pass && bump.positivity_applicable && bump.positivity_pass;
    verdict(
        "7 (maximum principle and positivity propagation)",
        pass,
        &format!(
            "50 randomized nonnegative terminals: min v >= -1e-8 ||f|| (worst ratio {worst_ratio:.2e}); bump terminal strictly positive at all interior nodes"
        ),
        started,
    );
}

#[test]
fn acceptance_08_no_arbitrage_probe() {
    let started = Instant::now();
    let model = positive_model(0.04);
    let hierarchy = PartitionHierarchy::new(1.0, 12).unwrap();
    let schedule = Arc::new(FixingSchedule::new(hierarchy, &[0.0, 0.5, 1.0]).unwrap());
    let grid = GridSpec::centered(&model, &[100.0], 1.0, 8.0, 401, 128).unwrap();
    let config = Arc::new(SchemeConfig::new(grid));

    // h = 0: the probe applies and every sampled portfolio value is zero
    let zero = Arc::new(PayoffSpec::parse("0", 0.0, 1.0).unwrap());
    let scheme_zero = build_scheme(
        model.clone(),
        schedule.clone(),
        zero,
        vec![vec![100.0]],
        config.clone(),
    )
    .unwrap();
    let generator = PathGeneratorSpec::new(model.clone(), 12, 13, 500, vec![100.0], 1.0).unwrap();
    let report = no_arbitrage_probe(&scheme_zero, &generator, 12, 100.0).unwrap();
    let zero_ok = report.verdict == NoArbVerdict::NoArbitrageFoundAtTolerance
        && report.max_portfolio_value.abs() <= 1e-10
        && report.initial_value.abs() <= 1e-8
        && report.floor_violations == 0;

    // counter-probe: a strictly positive payoff prices strictly positive at
    // every interior node (positivity propagation), so the probe's
    // precondition v0 <= 0 cannot be met
    let bump = Arc::new(PayoffSpec::parse("(max (- 1 (* 0.2 (max (- x2 100) (- 100 x2)))) 0)", 0.0, 1.0).unwrap());
    let scheme_bump =
        build_scheme(model, schedule, bump, vec![vec![100.0]], config).unwrap();
    let applicable = no_arbitrage_probe(&scheme_bump, &generator, 12, 100.0).unwrap();
    let bump_positive = scheme_bump
        .grid()
        .start_slice()
        .iter()
        .skip(1)
        .take(scheme_bump.grid().axes()[0].nodes - 2)
        .all(|&v| v > 0.0);
    let counter_ok = applicable.verdict == NoArbVerdict::NotApplicable && bump_positive;

    let pass = zero_ok && counter_ok;
    verdict(
        "8 (no-arbitrage probe)",
        pass,
        &format!(
            "h = 0: sup |V| {:.2e} <= 1e-10 over 500 paths; positive bump payoff: v0 {:.4} > 0 everywhere, probe not applicable",
            report.max_portfolio_value.abs(),
            applicable.initial_value
        ),
        started,
    );
}

#[test]
fn acceptance_09_path_dependent_residual_and_self_financing() {
    let started = Instant::now();
    let model = positive_model(0.04);
    let spec = AsianGridSpec::default();
    let functional = Arc::new(
        asian_call_functional(model.clone(), 100.0, 100.0, 1.0, &spec).unwrap(),
    );
    let f0 = functional.eval_state(0.0, &[100.0], 0.0).unwrap();
    let generator = PathGeneratorSpec::new(model.clone(), 14, 31, 128, vec![100.0], 1.0).unwrap();

    // residual samples: 16 paths x 8 times spanning [0.09, 0.75] x T; the
    // terminal-kink zone is excluded for pointwise stencils, matching the
    // interior-slice convention of the lattice residual
    let res_paths: Vec<_> = (0..16).map(|i| generate_path(&generator, i).unwrap()).collect();
    let times: Vec<f64> = (1..=8).map(|k| k as f64 * 0.09375).collect();
    let report = ftvp_residual(&functional, &model, &res_paths, &times, 10, 1e-4).unwrap();
    let (h, dt) = functional.grid_scales().unwrap();
    let res_tol = 20.0 * (h * h + dt * dt) * f0;
    let residual_ok = report.sup_residual <= res_tol && report.terminal_gap <= 1e-9;

    // self-financing: median over 128 paths of the max discrepancy, at
    // rebalancing levels 10 / 12 / 14
    let mut medians = Vec::new();
    for level in [10u32, 12, 14] {
        let d: Vec<f64> = (0..128u64)
            .into_par_iter()
            .map(|i| {
                let path = generate_path(&generator, i).unwrap();
                functional_hedge_check(&functional, &path, level, 1e-4).unwrap()
            })
            .collect();
        medians.push(median_abs(&d));
    }
    let hedge_ok =
        medians[2] <= 0.01 * f0 && medians[2] < medians[1] && medians[1] < medians[0];

    let pass = residual_ok && hedge_ok;
    verdict(
        "9 (path-dependent residual and functional self-financing)",
        pass,
        &format!(
            "sup sampled residual {:.3e} <= {:.3e} (128 samples), terminal gap {:.1e}; discrepancy medians {:.4}/{:.4}/{:.4} vs 1% F0 = {:.4}",
            report.sup_residual, res_tol, report.terminal_gap, medians[0], medians[1], medians[2], 0.01 * f0
        ),
        started,
    );
}
