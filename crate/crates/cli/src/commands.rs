//! One function per CLI command. Each returns the declared checks and the
//! files written; the caller assembles the manifest and exit code.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Result};
use rayon::prelude::*;

use pathwise_core::analytic;
use pathwise_core::functional::{
    asian_call_functional, ftvp_residual, functional_hedge_check, lookback_max_functional,
    terminal_functional, AsianGridSpec, AugmentedFunctional,
};
use pathwise_core::hedge::{
    covariation_diagnostic, generate_path, hedge_ensemble, median_abs, no_arbitrage_probe,
    robustness_sweep, run_hedge, NoArbVerdict,
};
use pathwise_core::lattice::{
    growth_envelope, pde_residual, solve_tvp, CovarianceFamily, GridSolution, LocalVolModel,
};
use pathwise_core::pathcalc::{covariation, ito_identity_residual_cross};
use pathwise_core::payoff::PayoffSpec;
use pathwise_core::scheme::{build_scheme, SchemeSolution};

use crate::config::ExperimentConfig;
use crate::report::{Check, Outcome};

pub struct CommandContext<'a> {
    pub config: &'a ExperimentConfig,
    pub out_dir: &'a Path,
    pub seed_override: Option<u64>,
    pub level_override: Option<u32>,
}

impl<'a> CommandContext<'a> {
    pub fn seed(&self) -> u64 {
        self.seed_override
            .or(self.config.generator.as_ref().map(|g| g.seed))
            .unwrap_or(0)
    }

    fn validate_model(&self, model: &LocalVolModel) -> Result<()> {
        let grid = self
            .config
            .grid
            .as_ref()
            .ok_or_else(|| anyhow!("model validation needs a [grid] section"))?;
        let horizon = self.config.partition.horizon;
        let width = grid.span_sigmas * (model.bound() * horizon).sqrt();
        let domain: Vec<(f64, f64)> = grid
            .center
            .iter()
            .map(|&c| match model.flavor() {
                pathwise_core::path::Flavor::Positive => {
                    (c * (-width).exp(), c * width.exp())
                }
                pathwise_core::path::Flavor::WholeSpace => (c - width, c + width),
            })
            .collect();
        model.validate(horizon, &domain)?;
        Ok(())
    }
}

fn scheme_at_spot(ctx: &CommandContext) -> Result<(Arc<LocalVolModel>, SchemeSolution)> {
    let model = ctx.config.build_model()?;
    ctx.validate_model(&model)?;
    let schedule = ctx.config.build_schedule()?;
    let payoff = ctx.config.build_payoff()?;
    let scheme_config = ctx.config.build_scheme_config(&model)?;
    let spot = ctx
        .config
        .grid
        .as_ref()
        .ok_or_else(|| anyhow!("need [grid] for the spot"))?
        .center
        .clone();
    let scheme = build_scheme(model.clone(), schedule, payoff, vec![spot], scheme_config)?;
    Ok((model, scheme))
}

/// `qv`: covariation curves of generated paths with across-level Cauchy
/// diagnostics and the realized-versus-target integral check.
pub fn run_qv(ctx: &CommandContext) -> Result<Outcome> {
    let section = ctx.config.qv.as_ref().ok_or_else(|| anyhow!("missing [qv] section"))?;
    let model = ctx.config.build_model()?;
    ctx.validate_model(&model)?;
    let generator =
        ctx.config
            .build_generator(model.clone(), ctx.seed_override, ctx.level_override)?;
    let mut outcome = Outcome::default();

    let mut summary = String::from("path,level,i,j,realized,target,cauchy_increment\n");
    let mut in_band = 0usize;
    let mut total = 0usize;
    let mut mean_cauchy: Vec<f64> = vec![0.0; section.levels.len()];
    for index in 0..generator.count as u64 {
        let path = generate_path(&generator, index)?;
        let diag = covariation_diagnostic(&path, &model, generator.kappa)?;
        for (li, &level) in section.levels.iter().enumerate() {
            let curve = covariation(&path, level)?;
            for (p, &(i, j)) in diag.pairs.iter().enumerate() {
                let realized = curve.terminal(i, j)?;
                let cauchy = curve.cauchy_increment(i, j)?;
                let _ = writeln!(
                    summary,
                    "{index},{level},{},{},{realized},{},{cauchy}",
                    i + 1,
                    j + 1,
                    diag.target[p]
                );
                mean_cauchy[li] += cauchy / (generator.count * diag.pairs.len()) as f64;
                if level == generator.level && i == j {
                    total += 1;
                    let band = 5.0 * (2.0f64 / (1u64 << level) as f64).sqrt();
                    if (realized / diag.target[p] - 1.0).abs() <= band {
                        in_band += 1;
                    }
                }
            }
        }
    }
    outcome.write_file(ctx.out_dir, "qv_summary.csv", &summary)?;

    // first path's full curves at the finest requested level
    let path = generate_path(&generator, 0)?;
    let top = *section.levels.iter().max().unwrap_or(&generator.level);
    let curve = covariation(&path, top)?;
    let mut curves = String::from("t");
    let d = model.dimension();
    for i in 0..d {
        for j in i..d {
            let _ = write!(curves, ",qv_{}{}", i + 1, j + 1);
        }
    }
    curves.push('\n');
    for (k, &t) in curve.times().iter().enumerate() {
        let _ = write!(curves, "{t}");
        for i in 0..d {
            for j in i..d {
                let _ = write!(curves, ",{}", curve.curve(i, j)?[k]);
            }
        }
        curves.push('\n');
    }
    outcome.write_file(ctx.out_dir, "qv_curves.csv", &curves)?;

    let fraction = if total == 0 { 1.0 } else { in_band as f64 / total as f64 };
    outcome.push_check(Check::ge("realized-covariation-band-fraction", fraction, 0.95));
    if mean_cauchy.len() >= 2 {
        let decreasing = mean_cauchy.windows(2).all(|w| w[1] <= w[0]);
        outcome.push_check(Check::flag("cauchy-increments-decreasing", decreasing));
    }
    Ok(outcome)
}

/// `integrate`: exact discrete quadratic identities for the basic
/// strategies over paths, levels, and strikes.
pub fn run_integrate(ctx: &CommandContext) -> Result<Outcome> {
    let section =
        ctx.config.integrate.as_ref().ok_or_else(|| anyhow!("missing [integrate] section"))?;
    let model = ctx.config.build_model()?;
    ctx.validate_model(&model)?;
    let generator =
        ctx.config
            .build_generator(model.clone(), ctx.seed_override, ctx.level_override)?;
    let d = model.dimension();
    let mut outcome = Outcome::default();
    let mut csv = String::from("path,level,i,j,strike,residual\n");
    let mut worst = 0.0f64;
    for index in 0..generator.count as u64 {
        let path = generate_path(&generator, index)?;
        for &level in &section.levels {
            for i in 0..d {
                for j in i..d {
                    for &strike in &section.strikes {
                        let r = ito_identity_residual_cross(&path, level, i, j, strike)?;
                        worst = worst.max(r);
                        let _ = writeln!(
                            csv,
                            "{index},{level},{},{},{strike},{r}",
                            i + 1,
                            j + 1
                        );
                    }
                }
            }
        }
    }
    outcome.write_file(ctx.out_dir, "integrate.csv", &csv)?;
    outcome.push_check(Check::le("discrete-identity-max-relative-residual", worst, section.tolerance));
    Ok(outcome)
}

/// `solve`: one terminal-value solve with optional closed-form reference.
pub fn run_solve(ctx: &CommandContext) -> Result<Outcome> {
    let section = ctx.config.solve.as_ref().ok_or_else(|| anyhow!("missing [solve] section"))?;
    let model = ctx.config.build_model()?;
    ctx.validate_model(&model)?;
    let spec = ctx.config.build_grid(&model)?;
    let horizon = ctx.config.partition.horizon;
    let terminal_expr = PayoffSpec::parse(&section.terminal, 0.0, 1.0)?;
    let slots = terminal_expr.reads().into_iter().max().map_or(1, |m| m + 1);
    // in a single terminal solve every fixing reference means the terminal
    // value itself
    let terminal = move |x: &[f64]| terminal_expr.eval(&vec![x.to_vec(); slots]);
    let solution = solve_tvp(&model, &terminal, section.t_start, horizon, &spec)?;
    let mut outcome = Outcome::default();
    outcome.write_file(ctx.out_dir, "solution.csv", &solution.to_csv())?;

    let h = solution.axes()[0].step();
    let dt = solution.dt();
    let scale = solution
        .terminal_slice()
        .iter()
        .fold(1.0f64, |m, &v| m.max(v.abs()));
    let residual = pde_residual(&solution, &model, 1, (solution.steps() / 50).max(1));
    outcome.push_check(Check::le(
        "interior-pde-residual",
        residual,
        10.0 * (h * h + dt * dt) * scale,
    ));

    match section.reference.as_deref() {
        None => {}
        Some("heat-quadratic") => {
            let max_error = reference_heat_error(&solution, section.t_start, horizon)?;
            outcome.push_check(Check::le(
                "max-error-vs-closed-form",
                max_error,
                section.max_error.unwrap_or(1e-3),
            ));
        }
        Some("black-scholes-call") => {
            let center = ctx.config.grid.as_ref().unwrap().center[0];
            let sigma_sq = match model.family() {
                CovarianceFamily::Constant(m) => m.get(0, 0),
                _ => bail!("black-scholes-call reference needs a constant model"),
            };
            let tau = horizon - section.t_start;
            let truth = analytic::black_scholes_call(center, center, sigma_sq.sqrt(), tau);
            let price = solution.value(section.t_start, &[center])?;
            outcome.push_check(Check::le(
                "price-relative-error",
                (price - truth).abs() / truth,
                section.max_error.unwrap_or(0.002),
            ));
        }
        Some(other) => bail!("unknown solve reference '{other}'"),
    }
    // growth preservation: the solved surface keeps the terminal data's
    // quadratic growth up to a moderate constant
    let envelope = growth_envelope(&solution, 2.0);
    let terminal_envelope = {
        let axis = solution.axes()[0];
        let mut c = 0.0f64;
        for (k, &v) in solution.terminal_slice().iter().enumerate() {
            let x = solution.to_raw(&[axis.coord(k)]);
            c = c.max(v.abs() / (1.0 + x[0] * x[0]));
        }
        c
    };
    outcome.push_check(Check::le(
        "growth-envelope-p2",
        envelope,
        10.0 * terminal_envelope.max(1e-12),
    ));
    Ok(outcome)
}

fn reference_heat_error(solution: &GridSolution, t_start: f64, horizon: f64) -> Result<f64> {
    let axis = solution.axes()[0];
    let mut worst = 0.0f64;
    let margin = 4.0 * (2.0 * (horizon - t_start)).sqrt();
    for k in 0..axis.nodes {
        let x = axis.coord(k);
        if x < axis.lo + margin || x > axis.hi - margin {
            continue;
        }
        let truth = analytic::heat_quadratic(t_start, x, horizon);
        worst = worst.max((solution.start_slice()[k] - truth).abs());
    }
    Ok(worst)
}

/// `price`: recursive-scheme value and Delta at the grid center.
pub fn run_price(ctx: &CommandContext) -> Result<Outcome> {
    let section = ctx.config.price.as_ref().ok_or_else(|| anyhow!("missing [price] section"))?;
    let (_, scheme) = scheme_at_spot(ctx)?;
    let spot = &ctx.config.grid.as_ref().unwrap().center;
    let value = scheme.value(0.0, spot)?;
    let delta = scheme.delta(0.0, spot)?;
    let mut outcome = Outcome::default();
    let mut csv = String::from("quantity,value\n");
    let _ = writeln!(csv, "value,{value}");
    for (i, d) in delta.iter().enumerate() {
        let _ = writeln!(csv, "delta_{},{d}", i + 1);
    }
    let _ = writeln!(csv, "nested_solves,{}", scheme.solves_used());
    for warning in scheme.warnings() {
        let _ = writeln!(csv, "warning,{warning}");
    }
    outcome.write_file(ctx.out_dir, "price.csv", &csv)?;
    if let Some(reference) = section.reference_value {
        outcome.push_check(Check::le(
            "price-relative-error",
            (value - reference).abs() / reference.abs().max(1e-12),
            section.tolerance_rel,
        ));
    }
    Ok(outcome)
}

/// `hedge`: hedging simulation over an ensemble at one or more rebalancing
/// levels, with per-path summaries and optional per-node detail files.
pub fn run_hedge_command(ctx: &CommandContext) -> Result<Outcome> {
    let section = ctx.config.hedge.as_ref().ok_or_else(|| anyhow!("missing [hedge] section"))?;
    if section.levels.is_empty() {
        bail!("hedge needs at least one level");
    }
    let (model, scheme) = scheme_at_spot(ctx)?;
    let generator =
        ctx.config.build_generator(model, ctx.seed_override, ctx.level_override)?;
    let spot = generator.initial[0];
    let mut outcome = Outcome::default();

    // rebalancing cannot be finer than the stored paths; an overridden
    // generator level caps the requested levels
    let mut levels: Vec<u32> =
        section.levels.iter().copied().filter(|&l| l <= generator.level).collect();
    if levels.is_empty() {
        levels.push(generator.level);
    }
    let mut summary =
        String::from("level,path,initial_capital,payoff,terminal_value,replication_error,grid_exits\n");
    let mut medians = Vec::new();
    for &level in &levels {
        let summaries = hedge_ensemble(&generator, &scheme, level)?;
        let errors: Vec<f64> = summaries.iter().map(|s| s.replication_error).collect();
        medians.push(median_abs(&errors));
        for (p, s) in summaries.iter().enumerate() {
            let _ = writeln!(
                summary,
                "{level},{p},{},{},{},{},{}",
                s.initial_capital,
                s.payoff,
                s.payoff + s.replication_error,
                s.replication_error,
                s.grid_exits
            );
        }
    }
    outcome.write_file(ctx.out_dir, "hedge_summary.csv", &summary)?;

    for p in 0..section.detail_paths.min(generator.count) {
        let path = generate_path(&generator, p as u64)?;
        let top = *levels.iter().max().unwrap();
        let report = run_hedge(&path, &scheme, top)?;
        outcome.write_file(
            ctx.out_dir,
            &format!("hedge_path{p}.csv"),
            &report.to_csv(&path),
        )?;
    }

    let top_median = *medians.last().unwrap();
    outcome.push_check(Check::le(
        "median-replication-error",
        top_median,
        section.median_tolerance_of_spot * spot,
    ));
    if medians.len() >= 2 {
        let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
        outcome.push_check(Check::flag("replication-error-decreases-with-level", decreasing));
    }
    Ok(outcome)
}

/// `robust`: covariation-mismatch sweep.
pub fn run_robust(ctx: &CommandContext) -> Result<Outcome> {
    let section =
        ctx.config.robust.as_ref().ok_or_else(|| anyhow!("missing [robust] section"))?;
    let model = ctx.config.build_model()?;
    ctx.validate_model(&model)?;
    let schedule = ctx.config.build_schedule()?;
    let scheme_config = ctx.config.build_scheme_config(&model)?;
    let generator =
        ctx.config
            .build_generator(model.clone(), ctx.seed_override, ctx.level_override)?;
    let spot = generator.initial[0];

    let payoffs: Result<Vec<_>> = section
        .payoffs
        .iter()
        .map(|p| {
            Ok((
                p.name.clone(),
                Arc::new(PayoffSpec::parse(&p.expr, 0.0, 1.0)?),
                schedule.clone(),
            ))
        })
        .collect();
    let payoffs = payoffs?;
    let tolerance = section.shortfall_tolerance_of_spot * spot;
    let rows = robustness_sweep(
        &payoffs,
        &section.kappas,
        model,
        scheme_config,
        &generator,
        section.level.min(generator.level),
        tolerance,
    )?;

    let mut outcome = Outcome::default();
    let mut csv = String::from("payoff,kappa,n_paths,median_error,shortfall_freq\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.payoff_name, row.kappa, row.n_paths, row.median_error, row.shortfall_freq
        );
    }
    outcome.write_file(ctx.out_dir, "robust.csv", &csv)?;

    for payoff in &section.payoffs {
        if !payoff.expect_superhedge {
            continue;
        }
        let below: Vec<&_> = rows
            .iter()
            .filter(|r| r.payoff_name == payoff.name && r.kappa < 1.0)
            .collect();
        let above: Vec<&_> = rows
            .iter()
            .filter(|r| r.payoff_name == payoff.name && r.kappa > 1.0)
            .collect();
        if let Some(worst) = below
            .iter()
            .map(|r| r.shortfall_freq)
            .fold(None::<f64>, |m, v| Some(m.map_or(v, |m| m.max(v))))
        {
            outcome.push_check(Check::le(
                format!("{}-shortfall-freq-dominated", payoff.name),
                worst,
                0.01,
            ));
        }
        if let (Some(lo), Some(hi)) = (
            below.iter().map(|r| r.shortfall_freq).fold(None::<f64>, |m, v| {
                Some(m.map_or(v, |m| m.max(v)))
            }),
            above.iter().map(|r| r.shortfall_freq).fold(None::<f64>, |m, v| {
                Some(m.map_or(v, |m| m.min(v)))
            }),
        ) {
            outcome.push_check(Check::flag(
                format!("{}-shortfall-direction", payoff.name),
                hi > lo,
            ));
        }
    }
    Ok(outcome)
}

/// `noarb`: the empirical no-arbitrage probe on the configured strategy.
pub fn run_noarb(ctx: &CommandContext) -> Result<Outcome> {
    let section = ctx.config.noarb.as_ref().ok_or_else(|| anyhow!("missing [noarb] section"))?;
    let (model, scheme) = scheme_at_spot(ctx)?;
    let mut generator =
        ctx.config.build_generator(model, ctx.seed_override, ctx.level_override)?;
    generator.count = section.paths;
    let level = section.level.min(generator.level);
    let report = no_arbitrage_probe(&scheme, &generator, level, section.scale)?;

    let mut outcome = Outcome::default();
    let mut csv = String::from("quantity,value\n");
    let verdict = match report.verdict {
        NoArbVerdict::NoArbitrageFoundAtTolerance => "no-arbitrage-found-at-tolerance",
        NoArbVerdict::NotApplicable => "not-applicable",
        NoArbVerdict::ViolationFound => "violation-found",
    };
    let _ = writeln!(csv, "verdict,{verdict}");
    let _ = writeln!(csv, "initial_value,{}", report.initial_value);
    let _ = writeln!(csv, "max_portfolio_value,{}", report.max_portfolio_value);
    let _ = writeln!(csv, "admissibility_floor,{}", report.admissibility_floor);
    let _ = writeln!(csv, "floor_violations,{}", report.floor_violations);
    let _ = writeln!(csv, "n_paths,{}", report.n_paths);
    let _ = writeln!(csv, "tolerance,{}", report.tolerance);
    outcome.write_file(ctx.out_dir, "noarb.csv", &csv)?;
    outcome.push_check(Check::flag(
        "no-violation-found",
        report.verdict != NoArbVerdict::ViolationFound,
    ));
    if report.verdict == NoArbVerdict::NoArbitrageFoundAtTolerance {
        outcome.push_check(Check::le(
            "max-portfolio-value",
            report.max_portfolio_value,
            report.tolerance,
        ));
    }
    Ok(outcome)
}

fn build_functional(
    ctx: &CommandContext,
    model: &Arc<LocalVolModel>,
) -> Result<Arc<AugmentedFunctional>> {
    let section = ctx.config.ftvp.as_ref().unwrap();
    let spot = ctx
        .config
        .grid
        .as_ref()
        .ok_or_else(|| anyhow!("need [grid] for the spot"))?
        .center[0];
    let horizon = ctx.config.partition.horizon;
    match section.functional.as_str() {
        "asian-call" => {
            let strike =
                section.strike.ok_or_else(|| anyhow!("asian-call needs 'strike'"))?;
            let spec = AsianGridSpec {
                steps: section.steps,
                zeta_nodes: section.zeta_nodes,
                span_sigmas: ctx.config.grid.as_ref().unwrap().span_sigmas,
            };
            Ok(Arc::new(asian_call_functional(model.clone(), spot, strike, horizon, &spec)?))
        }
        "lookback-max" => {
            let sigma_sq = match model.family() {
                CovarianceFamily::Constant(m) => m.get(0, 0),
                _ => bail!("lookback-max needs a constant model"),
            };
            Ok(Arc::new(lookback_max_functional(sigma_sq.sqrt(), horizon)?))
        }
        "terminal" => {
            let payoff = ctx.config.build_payoff()?;
            let slots = payoff.reads().into_iter().max().map_or(1, |m| m + 1);
            let spec = ctx.config.build_grid(model)?;
            let terminal = move |x: &[f64]| payoff.eval(&vec![x.to_vec(); slots]);
            let solution = solve_tvp(model, &terminal, 0.0, horizon, &spec)?;
            Ok(Arc::new(terminal_functional(Arc::new(solution))))
        }
        other => bail!("unknown functional '{other}'"),
    }
}

/// `ftvp`: residuals of the path-dependent backward equation and the
/// functional self-financing identity along generated paths.
pub fn run_ftvp(ctx: &CommandContext) -> Result<Outcome> {
    let section = ctx.config.ftvp.as_ref().ok_or_else(|| anyhow!("missing [ftvp] section"))?;
    let model = ctx.config.build_model()?;
    ctx.validate_model(&model)?;
    let functional = build_functional(ctx, &model)?;
    let generator =
        ctx.config
            .build_generator(model.clone(), ctx.seed_override, ctx.level_override)?;
    let horizon = ctx.config.partition.horizon;
    let spot = generator.initial.clone();

    let paths: Result<Vec<_>, _> =
        (0..generator.count as u64).map(|i| generate_path(&generator, i)).collect();
    let paths = paths?;
    let sample_level = generator.level.min(10);
    let times: Vec<f64> = section.sample_times.clone().unwrap_or_else(|| {
        (1..=8).map(|k| k as f64 * 0.09375 * horizon).collect()
    });

    let report = ftvp_residual(&functional, &model, &paths, &times, sample_level, 1e-4)?;
    let mut outcome = Outcome::default();
    let mut csv = String::from("t,x,state,DF,A_F,residual\n");
    for s in &report.samples {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            s.t, s.x, s.state, s.horizontal, s.diffusion_term, s.residual
        );
    }
    outcome.write_file(ctx.out_dir, "ftvp_residual.csv", &csv)?;

    let f0 = {
        let states = match functional.state_kind() {
            pathwise_core::functional::StateKind::RunningMaximum => spot[0],
            _ => 0.0,
        };
        functional.eval_state(0.0, &spot, states)?
    };
    if let Some((h, dt)) = functional.grid_scales() {
        outcome.push_check(Check::le(
            "sup-sampled-residual",
            report.sup_residual,
            20.0 * (h * h + dt * dt) * f0.abs().max(1.0),
        ));
    } else {
        // closed forms carry only stencil error
        outcome.push_check(Check::le(
            "sup-sampled-residual",
            report.sup_residual,
            0.02 * f0.abs().max(1.0),
        ));
    }
    outcome.push_check(Check::le("terminal-consistency-gap", report.terminal_gap, 1e-9));

    let mut levels: Vec<u32> =
        section.levels.iter().copied().filter(|&l| l <= generator.level).collect();
    if levels.is_empty() {
        levels.push(generator.level);
    }
    let mut medians = Vec::new();
    let mut hedge_csv = String::from("level,path,discrepancy\n");
    for &level in &levels {
        let d: Vec<f64> = (0..paths.len())
            .into_par_iter()
            .map(|i| functional_hedge_check(&functional, &paths[i], level, 1e-4))
            .collect::<Result<Vec<_>, _>>()?;
        for (p, v) in d.iter().enumerate() {
            let _ = writeln!(hedge_csv, "{level},{p},{v}");
        }
        medians.push(median_abs(&d));
    }
    outcome.write_file(ctx.out_dir, "ftvp_hedge.csv", &hedge_csv)?;
    if let Some(&top) = medians.last() {
        outcome.push_check(Check::le(
            "self-financing-median-discrepancy",
            top,
            section.discrepancy_tolerance * f0.abs().max(1e-12),
        ));
    }
    if medians.len() >= 2 {
        outcome.push_check(Check::flag(
            "self-financing-discrepancy-decreasing",
            medians.windows(2).all(|w| w[1] < w[0]),
        ));
    }
    Ok(outcome)
}
