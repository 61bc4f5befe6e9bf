//! Pathwise Delta hedging: path generation, the hedging walk, robustness
//! sweeps under covariation mismatch, and empirical no-arbitrage probes.
//!
//! The simulator is strictly pathwise: given one trajectory, the portfolio
//! value is the initial capital plus the left-endpoint Riemann sums of the
//! hedge ratio against price increments, with the hedge ratio read from the
//! gradient of the current interval's value surface and re-anchored at every
//! fixing. Self-financing is therefore an identity of the bookkeeping, not a
//! property to verify.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{PathwiseError, Result};
use crate::lattice::model::LocalVolModel;
use crate::partition::PartitionHierarchy;
use crate::path::{Flavor, SampledPath};
use crate::pathcalc::covariation;
use crate::payoff::PayoffSpec;
use crate::rng::path_rng;
use crate::scheme::{build_scheme, FixingSchedule, RollOutcome, SchemeConfig, SchemeSolution};
use crate::sde::euler_chain;

/// How to generate trajectory surrogates: Euler paths whose realized
/// covariation tracks `kappa * a` while hedging still assumes `a`.
#[derive(Debug, Clone)]
pub struct PathGeneratorSpec {
    pub model: Arc<LocalVolModel>,
    pub level: u32,
    pub seed: u64,
    pub count: usize,
    pub kappa: f64,
    pub initial: Vec<f64>,
    pub horizon: f64,
}

impl PathGeneratorSpec {
    pub fn new(model: Arc<LocalVolModel>, level: u32, seed: u64, count: usize, initial: Vec<f64>, horizon: f64) -> Result<Self> {
        if initial.len() != model.dimension() {
            return Err(PathwiseError::DimensionMismatch {
                expected: model.dimension(),
                got: initial.len(),
            });
        }
        if model.flavor() == Flavor::Positive && initial.iter().any(|&v| v <= 0.0) {
            return Err(PathwiseError::Validation("positive flavor needs positive start".into()));
        }
        Ok(Self { model, level, seed, count, kappa: 1.0, initial, horizon })
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        if kappa.is_nan() || kappa <= 0.0 {
            return Err(PathwiseError::Validation(format!("kappa must be positive, got {kappa}")));
        }
        self.kappa = kappa;
        Ok(self)
    }
}

/// Generate the `index`-th path of the ensemble described by `spec`.
pub fn generate_path(spec: &PathGeneratorSpec, index: u64) -> Result<SampledPath> {
    let hierarchy = PartitionHierarchy::new(spec.horizon, spec.level)?;
    let steps = hierarchy.nodes(spec.level) - 1;
    let dt = hierarchy.mesh(spec.level);
    let mut rng = path_rng(spec.seed, index);
    let values = euler_chain(&spec.model, spec.kappa, 0.0, &spec.initial, dt, steps, &mut rng)?;
    SampledPath::new(hierarchy, spec.model.dimension(), spec.model.flavor(), values)
}

/// Terminal realized covariation of a path against the target integral
/// `int kappa a dt` (whole space) or `int kappa a S_i S_j dt` (positive),
/// one row per pair `(i, j)` with `i <= j`.
#[derive(Debug, Clone)]
pub struct CovariationDiagnostic {
    pub pairs: Vec<(usize, usize)>,
    pub realized: Vec<f64>,
    pub target: Vec<f64>,
}

pub fn covariation_diagnostic(
    path: &SampledPath,
    model: &LocalVolModel,
    kappa: f64,
) -> Result<CovariationDiagnostic> {
    let level = path.hierarchy().max_level();
    let curve = covariation(path, level)?;
    let d = path.dimension();
    let dt = path.hierarchy().mesh(level);
    let mut pairs = Vec::new();
    let mut realized = Vec::new();
    let mut target = vec![];
    for i in 0..d {
        for j in i..d {
            pairs.push((i, j));
            realized.push(curve.terminal(i, j)?);
            target.push(0.0);
        }
    }
    for k in 0..(path.hierarchy().nodes(level) - 1) {
        let t = path.hierarchy().time(level, k);
        let x = path.node(k);
        let a = model.covariance(t, x);
        let mut p = 0;
        for i in 0..d {
            for j in i..d {
                let weight = match model.flavor() {
                    Flavor::WholeSpace => 1.0,
                    Flavor::Positive => x[i] * x[j],
                };
                target[p] += kappa * a.get(i, j) * weight * dt;
                p += 1;
            }
        }
    }
    Ok(CovariationDiagnostic { pairs, realized, target })
}

/// Full per-node record of one hedging run.
#[derive(Debug, Clone)]
pub struct HedgeReport {
    pub level: u32,
    pub times: Vec<f64>,
    /// Node-major holdings in the risky assets.
    pub xi: Vec<f64>,
    /// Riskless position `eta = V - xi . S`.
    pub eta: Vec<f64>,
    /// Portfolio value `V(t)`, defined through the pathwise integral.
    pub value: Vec<f64>,
    pub initial_capital: f64,
    pub payoff: f64,
    /// `V(T) - payoff`.
    pub replication_error: f64,
    /// Number of delta queries clamped to the grid's evaluation region.
    pub grid_exits: usize,
    pub realized_covariation: Vec<f64>,
    pub target_covariation: Vec<f64>,
}

impl HedgeReport {
    pub fn terminal_value(&self) -> f64 {
        *self.value.last().unwrap()
    }

    pub fn max_value(&self) -> f64 {
        self.value.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.value.iter().copied().fold(f64::MAX, f64::min)
    }

    /// CSV export with header `t,V,xi_1..xi_d,eta,S_1..S_d`.
    pub fn to_csv(&self, path: &SampledPath) -> String {
        let d = path.dimension();
        let mut out = String::from("t,V");
        for i in 1..=d {
            let _ = write!(out, ",xi_{i}");
        }
        out.push_str(",eta");
        for i in 1..=d {
            let _ = write!(out, ",S_{i}");
        }
        out.push('\n');
        for (k, &t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t},{}", self.value[k]);
            for i in 0..d {
                let _ = write!(out, ",{}", self.xi[k * d + i]);
            }
            let _ = write!(out, ",{}", self.eta[k]);
            for &s in path.node_at_level(self.level, k) {
                let _ = write!(out, ",{s}");
            }
            out.push('\n');
        }
        out
    }
}

/// Walk one path at rebalancing level `n`, rolling the scheme at each fixing
/// and accumulating the portfolio value through left-endpoint Riemann sums.
///
/// `scheme0` must be the interval-0 solution built at the path's starting
/// spot. Queries that leave the grid's evaluation region are clamped and
/// counted, never extrapolated silently.
pub fn run_hedge(path: &SampledPath, scheme0: &SchemeSolution, level: u32) -> Result<HedgeReport> {
    path.hierarchy().check_level(level)?;
    let d = path.dimension();
    if d != scheme0.model().dimension() {
        return Err(PathwiseError::DimensionMismatch {
            expected: scheme0.model().dimension(),
            got: d,
        });
    }
    let schedule = scheme0.schedule();
    if (path.hierarchy().horizon() - schedule.hierarchy().horizon()).abs() > 1e-12 {
        return Err(PathwiseError::Validation("path and schedule horizons differ".into()));
    }
    let start = path.node(0);
    if scheme0
        .prefix()
        .first()
        .map(|p| p.as_slice() != start)
        .unwrap_or(true)
        || scheme0.interval() != 0
    {
        return Err(PathwiseError::Precondition(
            "scheme must be the interval-0 solution at the path's starting spot".into(),
        ));
    }
    // every fixing must be a rebalancing node
    let shift = schedule.hierarchy().max_level() - level.min(schedule.hierarchy().max_level());
    for k in 0..=schedule.intervals() {
        if !schedule.node_index(k).is_multiple_of(1usize << shift) {
            return Err(PathwiseError::Validation(format!(
                "fixing {k} does not sit on rebalancing level {level}"
            )));
        }
    }

    let nodes = path.hierarchy().nodes(level);
    let mut times = Vec::with_capacity(nodes);
    let mut xi = vec![0.0f64; nodes * d];
    let mut eta = vec![0.0f64; nodes];
    let mut value = vec![0.0f64; nodes];
    let mut grid_exits = 0usize;

    let mut current: SchemeSolution = scheme0.clone();
    let mut settled_payoff: Option<f64> = None;
    let v0 = current.value(0.0, start)?;
    value[0] = v0;

    for k in 0..nodes {
        let t = path.hierarchy().time(level, k);
        times.push(t);
        let spot = path.node_at_level(level, k);

        // roll at fixing dates (the interval is right-open: at t_{k+1} the
        // next surface takes over, anchored at the observed fixing); a
        // fixing outside the grid is clamped and counted, never
        // extrapolated silently
        while settled_payoff.is_none()
            && (t - schedule.time(current.interval() + 1)).abs() < 1e-12
        {
            let settling = current.interval() + 1 == schedule.intervals();
            let anchored = if settling {
                // settlement must see the realized fixing untouched
                spot.to_vec()
            } else {
                let mut native = current.grid().to_native(spot)?;
                if current.grid().clamp_full(&mut native) {
                    grid_exits += 1;
                }
                current.grid().to_raw(&native)
            };
            match current.roll_fixing(&anchored)? {
                RollOutcome::Next(next) => current = next,
                RollOutcome::Settled { payoff } => {
                    settled_payoff = Some(payoff);
                }
            }
        }

        // hedge ratio at this node; after settlement the position is closed
        // but the terminal-slice gradient is still reported at T
        let (delta, clamped) = if settled_payoff.is_some() {
            current.delta_clamped(t.min(current.grid().t_end()), spot)?
        } else {
            current.delta_clamped(t, spot)?
        };
        if clamped {
            grid_exits += 1;
        }
        for i in 0..d {
            xi[k * d + i] = delta[i];
        }
        let held: f64 = (0..d).map(|i| delta[i] * spot[i]).sum();
        eta[k] = value[k] - held;

        if k + 1 < nodes {
            let next_spot = path.node_at_level(level, k + 1);
            let mut dot = 0.0;
            for i in 0..d {
                dot += delta[i] * (next_spot[i] - spot[i]);
            }
            value[k + 1] = value[k] + dot;
        }
    }

    let payoff = settled_payoff.expect("schedule ends at the horizon");
    let diag = covariation_diagnostic(path, scheme0.model(), 1.0)?;
    Ok(HedgeReport {
        level,
        times,
        xi,
        eta,
        value: value.clone(),
        initial_capital: v0,
        payoff,
        replication_error: value[nodes - 1] - payoff,
        grid_exits,
        realized_covariation: diag.realized,
        target_covariation: diag.target,
    })
}

/// Compact per-path outcome used by ensembles.
#[derive(Debug, Clone, Copy)]
pub struct HedgeSummary {
    pub initial_capital: f64,
    pub payoff: f64,
    pub replication_error: f64,
    pub max_value: f64,
    pub min_value: f64,
    pub grid_exits: usize,
}

/// Hedge an ensemble of generated paths at one rebalancing level. Results
/// are ordered by path index and independent of the worker count.
pub fn hedge_ensemble(
    generator: &PathGeneratorSpec,
    scheme0: &SchemeSolution,
    level: u32,
) -> Result<Vec<HedgeSummary>> {
    (0..generator.count as u64)
        .into_par_iter()
        .map(|index| {
            let path = generate_path(generator, index)?;
            let report = run_hedge(&path, scheme0, level)?;
            Ok(HedgeSummary {
                initial_capital: report.initial_capital,
                payoff: report.payoff,
                replication_error: report.replication_error,
                max_value: report.max_value(),
                min_value: report.min_value(),
                grid_exits: report.grid_exits,
            })
        })
        .collect()
}

/// Median of `|values|`.
pub fn median_abs(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|x| x.abs()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One row of a robustness sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub payoff_name: String,
    pub kappa: f64,
    pub n_paths: usize,
    pub median_error: f64,
    pub shortfall_freq: f64,
}

/// Sweep payoffs against covariation scalings: paths realize `kappa * a`
/// while the hedge assumes `a`. A shortfall is a replication error below
/// `-shortfall_tolerance`.
pub fn robustness_sweep(
    payoffs: &[(String, Arc<PayoffSpec>, Arc<FixingSchedule>)],
    kappas: &[f64],
    model: Arc<LocalVolModel>,
    config: Arc<SchemeConfig>,
    generator: &PathGeneratorSpec,
    level: u32,
    shortfall_tolerance: f64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (name, payoff, schedule) in payoffs {
        let scheme0 = build_scheme(
            model.clone(),
            schedule.clone(),
            payoff.clone(),
            vec![generator.initial.clone()],
            config.clone(),
        )?;
        for &kappa in kappas {
            let gen_k = generator.clone().with_kappa(kappa)?;
            let summaries = hedge_ensemble(&gen_k, &scheme0, level)?;
            let errors: Vec<f64> = summaries.iter().map(|s| s.replication_error).collect();
            let shortfalls =
                errors.iter().filter(|&&e| e < -shortfall_tolerance).count();
            rows.push(SweepRow {
                payoff_name: name.clone(),
                kappa,
                n_paths: summaries.len(),
                median_error: median_abs(&errors),
                shortfall_freq: shortfalls as f64 / summaries.len() as f64,
            });
        }
    }
    Ok(rows)
}

/// Verdict of the empirical no-arbitrage probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoArbVerdict {
    /// `h >= 0`, `v_0 <= eps`, and no sampled portfolio value exceeded the
    /// tolerance: no arbitrage found at tolerance (never a proof).
    NoArbitrageFoundAtTolerance,
    /// The strategy has strictly positive initial value; the probe's
    /// contrapositive does not apply.
    NotApplicable,
    /// A sampled portfolio value exceeded the tolerance.
    ViolationFound,
}

#[derive(Debug, Clone)]
pub struct NoArbReport {
    pub verdict: NoArbVerdict,
    pub initial_value: f64,
    /// Largest `V(t)` over all sampled paths and times.
    pub max_portfolio_value: f64,
    /// Admissibility floor `c = ||min(v, 0)||_inf` over the scheme grids.
    pub admissibility_floor: f64,
    /// Paths whose portfolio value dropped below `-c` beyond tolerance.
    pub floor_violations: usize,
    pub n_paths: usize,
    pub tolerance: f64,
}

/// Probe the contrapositive of the no-arbitrage property on a scheme-built
/// strategy with nonnegative payoff: if the initial value is (numerically)
/// nonpositive, no sampled portfolio value may rise above tolerance.
pub fn no_arbitrage_probe(
    scheme0: &SchemeSolution,
    generator: &PathGeneratorSpec,
    level: u32,
    scale: f64,
) -> Result<NoArbReport> {
    // payoff nonnegativity on sampled fixing vectors from the grid range
    let payoff = scheme0.payoff();
    let axis = scheme0.grid().axes()[0];
    let to_raw = |y: f64| if scheme0.grid().log_space() { y.exp() } else { y };
    let n_fix = scheme0.schedule().intervals() + 1;
    let d = scheme0.model().dimension();
    let mut rng = path_rng(generator.seed ^ 0x6e6f617262, 0);
    for probe in 0..1000 {
        let fixings: Vec<Vec<f64>> = (0..n_fix)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        use rand::Rng;
                        to_raw(rng.gen_range(axis.lo..axis.hi))
                    })
                    .collect()
            })
            .collect();
        let h = payoff.eval(&fixings);
        if h < 0.0 {
            return Err(PathwiseError::Precondition(format!(
                "payoff takes negative value {h} (probe {probe}); h >= 0 required"
            )));
        }
    }

    let start = &generator.initial;
    let v0 = scheme0.value(0.0, start)?;
    let eps0 = 1e-8 * scale;
    if v0 > eps0 {
        return Ok(NoArbReport {
            verdict: NoArbVerdict::NotApplicable,
            initial_value: v0,
            max_portfolio_value: f64::NAN,
            admissibility_floor: f64::NAN,
            floor_violations: 0,
            n_paths: 0,
            tolerance: 1e-6 * scale,
        });
    }

    let summaries = hedge_ensemble(generator, scheme0, level)?;
    let mut max_v = f64::MIN;
    let mut floor = 0.0f64;
    for &v in scheme0.grid().start_slice() {
        floor = floor.max(-v.min(0.0));
    }
    let tolerance = 1e-6 * scale;
    let mut floor_violations = 0usize;
    for s in &summaries {
        max_v = max_v.max(s.max_value);
        if s.min_value < -(floor + tolerance) {
            floor_violations += 1;
        }
    }
    let verdict = if max_v <= tolerance && floor_violations == 0 {
        NoArbVerdict::NoArbitrageFoundAtTolerance
    } else {
        NoArbVerdict::ViolationFound
    };
    Ok(NoArbReport {
        verdict,
        initial_value: v0,
        max_portfolio_value: max_v,
        admissibility_floor: floor,
        floor_violations,
        n_paths: summaries.len(),
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::grid::GridSpec;
    use crate::partition::PartitionHierarchy;

    fn setup_call(
        level: u32,
        nodes: usize,
        steps: usize,
        span: f64,
    ) -> (Arc<LocalVolModel>, Arc<FixingSchedule>, SchemeSolution) {
        let model = Arc::new(LocalVolModel::constant_1d(Flavor::Positive, 0.04).unwrap());
        let hierarchy = PartitionHierarchy::new(1.0, level).unwrap();
        let schedule = Arc::new(FixingSchedule::new(hierarchy, &[0.0, 1.0]).unwrap());
        let payoff = Arc::new(PayoffSpec::parse("(call x1 100)", 0.0, 1.0).unwrap());
        let grid = GridSpec::centered(&model, &[100.0], 1.0, span, nodes, steps).unwrap();
        let config = Arc::new(SchemeConfig::new(grid));
        let scheme =
            build_scheme(model.clone(), schedule.clone(), payoff, vec![vec![100.0]], config)
                .unwrap();
        (model, schedule, scheme)
    }

    #[test]
    fn generated_path_has_matching_covariation() {
        // d = 1, a = 0.04, T = 1, level 14: realized QV within the
        // chi-square band 0.04 (1 +- 3 sqrt(2 / 2^14))
        let model = Arc::new(LocalVolModel::constant_1d(Flavor::Positive, 0.04).unwrap());
        let spec = PathGeneratorSpec::new(model.clone(), 14, 42, 1, vec![100.0], 1.0).unwrap();
        let path = generate_path(&spec, 0).unwrap();
        let diag = covariation_diagnostic(&path, &model, 1.0).unwrap();
        // positive flavor: compare against the weighted target integral
        let band = 3.0 * (2.0f64 / 16384.0).sqrt();
        let ratio = diag.realized[0] / diag.target[0];
        assert!(
            (ratio - 1.0).abs() <= band,
            "realized/target = {ratio}, band {band}"
        );
    }

    #[test]
    fn whole_space_covariation_hits_target_with_pinned_seed() {
        // a = 0.04, T = 1, seed 42, level 14: the realized quadratic
        // variation lands within three chi-square standard deviations of
        // the integral 0.04
        let model = Arc::new(LocalVolModel::constant_1d(Flavor::WholeSpace, 0.04).unwrap());
        let spec = PathGeneratorSpec::new(model, 14, 42, 1, vec![0.0], 1.0).unwrap();
        let path = generate_path(&spec, 0).unwrap();
        let qv = covariation(&path, 14).unwrap().terminal(0, 0).unwrap();
        let band = 3.0 * (2.0f64 / 16384.0).sqrt() * 0.04;
        assert!((qv - 0.04).abs() <= band, "qv {qv} vs 0.04 +- {band}");
    }

    #[test]
    fn two_asset_correlation_is_recovered() {
        let model = Arc::new(LocalVolModel::constant_2d(Flavor::Positive, 0.04, 0.09, 0.5).unwrap());
        let spec =
            PathGeneratorSpec::new(model.clone(), 12, 7, 1, vec![100.0, 50.0], 1.0).unwrap();
        let mut corr_sum = 0.0;
        let n = 40;
        for idx in 0..n {
            let path = generate_path(&spec, idx).unwrap();
            let c = covariation(&path, 12).unwrap();
            let (c11, c22, c12) = (
                c.terminal(0, 0).unwrap(),
                c.terminal(1, 1).unwrap(),
                c.terminal(0, 1).unwrap(),
            );
            corr_sum += c12 / (c11 * c22).sqrt();
        }
        let corr = corr_sum / n as f64;
        assert!((corr - 0.5).abs() < 0.05, "mean realized correlation {corr}");
    }

    #[test]
    fn linear_payoff_replicates_exactly() {
        // h = x_1 (terminal spot): xi = 1, replication error at roundoff
        let model = Arc::new(LocalVolModel::constant_1d(Flavor::Positive, 0.04).unwrap());
        let hierarchy = PartitionHierarchy::new(1.0, 10).unwrap();
        let schedule = Arc::new(FixingSchedule::new(hierarchy, &[0.0, 1.0]).unwrap());
        let payoff = Arc::new(PayoffSpec::parse("x1", 0.0, 1.0).unwrap());
        let grid = GridSpec::centered(&model, &[100.0], 1.0, 10.0, 801, 200).unwrap();
        let config = Arc::new(SchemeConfig::new(grid));
        let scheme =
            build_scheme(model.clone(), schedule, payoff, vec![vec![100.0]], config).unwrap();
        let spec = PathGeneratorSpec::new(model, 10, 5, 1, vec![100.0], 1.0).unwrap();
        let path = generate_path(&spec, 0).unwrap();
        let report = run_hedge(&path, &scheme, 10).unwrap();
        assert!(
            report.replication_error.abs() <= 1e-6 * 100.0,
            "error {}",
            report.replication_error
        );
        assert!((report.initial_capital - 100.0).abs() < 2e-3 * 100.0);
        // self-financing bookkeeping: eta + xi . S = V at every node
        for (k, &t) in report.times.iter().enumerate() {
            let s = path.value_at(t).unwrap();
            let held = report.xi[k] * s[0];
            assert!((report.eta[k] + held - report.value[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn portfolio_value_is_the_follmer_integral() {
        let (_, _, scheme) = setup_call(10, 401, 128, 10.0);
        let spec = PathGeneratorSpec::new(
            Arc::new(LocalVolModel::constant_1d(Flavor::Positive, 0.04).unwrap()),
            10,
            11,
            1,
            vec![100.0],
            1.0,
        )
        .unwrap();
        let path = generate_path(&spec, 0).unwrap();
        let report = run_hedge(&path, &scheme, 10).unwrap();
        // re-integrate the stored holdings
        let stored = report.xi.clone();
        let level = report.level;
        let integrand = move |t: f64, _spot: &[f64], out: &mut [f64]| {
            let k = (t * 1024.0).round() as usize;
            out[0] = stored[k.min(1024)];
            let _ = level;
        };
        let curve = crate::pathcalc::follmer_integral(&integrand, &path, 10).unwrap();
        for (k, &v) in report.value.iter().enumerate() {
            let recon = report.initial_capital + curve.values[k];
            assert!((v - recon).abs() < 1e-10, "node {k}: {v} vs {recon}");
        }
    }

    #[test]
    fn matched_call_hedge_error_shrinks_with_level() {
        let (model, _, scheme) = setup_call(14, 801, 400, 10.0);
        let generator =
            PathGeneratorSpec::new(model, 14, 2025, 40, vec![100.0], 1.0).unwrap();
        let mut medians = Vec::new();
        for level in [10u32, 12, 14] {
            let summaries = hedge_ensemble(&generator, &scheme, level).unwrap();
            let errors: Vec<f64> =
                summaries.iter().map(|s| s.replication_error).collect();
            medians.push(median_abs(&errors));
        }
        assert!(
            medians[2] < medians[1] && medians[1] < medians[0],
            "medians {medians:?}"
        );
        assert!(medians[2] <= 0.01 * 100.0, "level-14 median {}", medians[2]);
    }

    #[test]
    fn superhedge_when_hedge_covariation_dominates() {
        let (model, _, scheme) = setup_call(12, 801, 400, 10.0);
        let generator = PathGeneratorSpec::new(model, 12, 77, 60, vec![100.0], 1.0)
            .unwrap()
            .with_kappa(0.64)
            .unwrap();
        let summaries = hedge_ensemble(&generator, &scheme, 12).unwrap();
        let tol = 0.001 * 100.0;
        let shortfalls = summaries
            .iter()
            .filter(|s| s.replication_error < -tol)
            .count();
        assert!(
            shortfalls <= 1,
            "{} shortfalls out of {}",
            shortfalls,
            summaries.len()
        );
    }

    #[test]
    fn zero_payoff_probe_is_identically_zero() {
        let model = Arc::new(LocalVolModel::constant_1d(Flavor::Positive, 0.04).unwrap());
        let hierarchy = PartitionHierarchy::new(1.0, 10).unwrap();
        let schedule = Arc::new(FixingSchedule::new(hierarchy, &[0.0, 0.5, 1.0]).unwrap());
        let payoff = Arc::new(PayoffSpec::parse("0", 0.0, 1.0).unwrap());
        let grid = GridSpec::centered(&model, &[100.0], 1.0, 8.0, 401, 128).unwrap();
        let config = Arc::new(SchemeConfig::new(grid));
        let scheme =
            build_scheme(model.clone(), schedule, payoff, vec![vec![100.0]], config).unwrap();
        let generator = PathGeneratorSpec::new(model, 10, 13, 50, vec![100.0], 1.0).unwrap();
        let report = no_arbitrage_probe(&scheme, &generator, 10, 100.0).unwrap();
        assert_eq!(report.verdict, NoArbVerdict::NoArbitrageFoundAtTolerance);
        assert!(report.max_portfolio_value.abs() <= 1e-10);
    }

    #[test]
    fn positive_priced_call_is_not_applicable() {
        let (model, _, scheme) = setup_call(10, 201, 64, 8.0);
        let generator = PathGeneratorSpec::new(model, 10, 17, 10, vec![100.0], 1.0).unwrap();
        let report = no_arbitrage_probe(&scheme, &generator, 10, 100.0).unwrap();
        assert_eq!(report.verdict, NoArbVerdict::NotApplicable);
        assert!(report.initial_value > 0.0);
    }

    #[test]
    fn scaling_payoff_scales_the_whole_report() {
        let model = Arc::new(LocalVolModel::constant_1d(Flavor::Positive, 0.04).unwrap());
        let hierarchy = PartitionHierarchy::new(1.0, 10).unwrap();
        let schedule = Arc::new(FixingSchedule::new(hierarchy, &[0.0, 1.0]).unwrap());
        let grid = GridSpec::centered(&model, &[100.0], 1.0, 8.0, 401, 128).unwrap();
        let config = Arc::new(SchemeConfig::new(grid));
        let build = |expr: &str| {
            build_scheme(
                model.clone(),
                schedule.clone(),
                Arc::new(PayoffSpec::parse(expr, 0.0, 1.0).unwrap()),
                vec![vec![100.0]],
                config.clone(),
            )
            .unwrap()
        };
        let base = build("(call x1 100)");
        let tripled = build("(* 3 (call x1 100))");
        let spec = PathGeneratorSpec::new(model, 10, 23, 1, vec![100.0], 1.0).unwrap();
        let path = generate_path(&spec, 0).unwrap();
        let r1 = run_hedge(&path, &base, 10).unwrap();
        let r3 = run_hedge(&path, &tripled, 10).unwrap();
        for k in 0..r1.value.len() {
            assert!((r3.value[k] - 3.0 * r1.value[k]).abs() <= 1e-10 * r1.value[k].abs().max(1.0));
            assert!((r3.xi[k] - 3.0 * r1.xi[k]).abs() <= 1e-10);
        }
        assert!((r3.payoff - 3.0 * r1.payoff).abs() < 1e-12);
    }
}
