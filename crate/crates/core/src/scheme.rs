//! Recursive terminal-value scheme for discretely fixed exotic payoffs.
//!
//! A payoff `h(x_0, ..., x_N)` fixed at dates `0 = t_0 < ... < t_N = T` is
//! priced by a backward chain of terminal-value solves: the solve on
//! `[t_k, t_{k+1}]` takes as terminal condition the next solution evaluated
//! on the diagonal of its last two arguments,
//! `f_{k+1}(x) = v_{k+1}(t_{k+1}, x_0, ..., x_k, x, x)`. The recursion
//! bottoms out at the payoff itself.
//!
//! Each diagonal evaluation is a nested solve with the prefix extended by a
//! fixing-grid value, so generic payoffs cost `M_f^(N-k)` solves; a budget
//! cap makes that explicit. Payoffs that ignore an intermediate fixing
//! collapse the corresponding branching to a single solve, which the memo
//! table detects through dependency analysis of the expression tree.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{PathwiseError, Result};
use crate::lattice::grid::{GridSolution, GridSpec};
use crate::lattice::model::LocalVolModel;
use crate::lattice::solver::{solve_tvp_with, SolveOptions};
use crate::partition::PartitionHierarchy;
use crate::path::Flavor;
use crate::payoff::PayoffSpec;
use crate::spline::CubicSpline;

/// Fixing dates of a discretely monitored payoff, all on the finest
/// partition level, starting at 0 and ending at the horizon.
#[derive(Debug, Clone)]
pub struct FixingSchedule {
    hierarchy: PartitionHierarchy,
    /// Finest-level node indices of `t_0 = 0 < t_1 < ... < t_N = T`.
    indices: Vec<usize>,
}

impl FixingSchedule {
    pub fn new(hierarchy: PartitionHierarchy, times: &[f64]) -> Result<Self> {
        if times.len() < 2 {
            return Err(PathwiseError::Validation("schedule needs at least t_0 and t_N".into()));
        }
        let level = hierarchy.max_level();
        let mut indices = Vec::with_capacity(times.len());
        for &t in times {
            indices.push(hierarchy.node_index(level, t)?);
        }
        if indices[0] != 0 {
            return Err(PathwiseError::Validation("first fixing must be t = 0".into()));
        }
        if *indices.last().unwrap() != hierarchy.nodes(level) - 1 {
            return Err(PathwiseError::Validation("last fixing must be t = T".into()));
        }
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PathwiseError::Validation("fixing times must strictly increase".into()));
        }
        Ok(Self { hierarchy, indices })
    }

    pub fn hierarchy(&self) -> &PartitionHierarchy {
        &self.hierarchy
    }

    /// Number of intervals `N` (there are `N + 1` fixings).
    pub fn intervals(&self) -> usize {
        self.indices.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.hierarchy.time(self.hierarchy.max_level(), self.indices[k])
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.indices.len()).map(|k| self.time(k)).collect()
    }

    pub fn node_index(&self, k: usize) -> usize {
        self.indices[k]
    }
}

/// Resolution and budget knobs of a scheme build.
#[derive(Debug, Clone)]
pub struct SchemeConfig {
    /// Shared spatial grid (native coordinates) for every interval.
    pub grid: GridSpec,
    /// Fixing-grid size `M_f` for tabulating nested terminal conditions.
    pub fixing_nodes: usize,
    /// Cap on the number of nested solves.
    pub budget_cap: u64,
    /// Whether nested solves are cached. Disabling is only useful for
    /// verifying that memoization is pure caching.
    pub memoize: bool,
}

impl SchemeConfig {
    pub fn new(grid: GridSpec) -> Self {
        Self { grid, fixing_nodes: 33, budget_cap: 100_000, memoize: true }
    }
}

type MemoKey = (usize, Vec<u32>);
type Memo = Mutex<HashMap<MemoKey, Arc<GridSolution>>>;

/// The solve chain for one realized prefix: the value surface on the current
/// interval plus everything needed to roll to the next fixing.
#[derive(Clone)]
pub struct SchemeSolution {
    model: Arc<LocalVolModel>,
    schedule: Arc<FixingSchedule>,
    payoff: Arc<PayoffSpec>,
    config: Arc<SchemeConfig>,
    /// Interval index `k`: the surface lives on `[t_k, t_{k+1}]`.
    interval: usize,
    /// Realized fixings `x_0 .. x_k`.
    prefix: Vec<Vec<f64>>,
    grid: Arc<GridSolution>,
    warnings: Vec<String>,
    solves_used: u64,
}

impl std::fmt::Debug for SchemeSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SchemeSolution")
            .field("interval", &self.interval)
            .field("prefix", &self.prefix)
            .field("solves_used", &self.solves_used)
            .finish()
    }
}

/// Result of consuming an observed fixing.
pub enum RollOutcome {
    /// The chain continues on the next interval.
    Next(SchemeSolution),
    /// The schedule is exhausted; the payoff is determined.
    Settled { payoff: f64 },
}

struct Builder<'a> {
    model: &'a LocalVolModel,
    schedule: &'a FixingSchedule,
    payoff: &'a PayoffSpec,
    config: &'a SchemeConfig,
    realized: &'a [Vec<f64>],
    /// Native-coordinate fixing grid (uniform).
    fixing_native: Vec<f64>,
    memo: Memo,
    solves: std::sync::atomic::AtomicU64,
}

impl<'a> Builder<'a> {
    fn interval_steps(&self, k: usize) -> usize {
        let total = self.config.grid.steps as f64;
        let len = self.schedule.time(k + 1) - self.schedule.time(k);
        let horizon = self.schedule.hierarchy().horizon();
        ((total * len / horizon).ceil() as usize).max(16)
    }

    fn fixing_raw(&self, q: usize) -> f64 {
        let y = self.fixing_native[q];
        if self.model.flavor() == Flavor::Positive {
            y.exp()
        } else {
            y
        }
    }

    /// Fixings the payoff reads, used to collapse memo keys.
    fn payoff_reads(&self, fixing: usize) -> bool {
        self.payoff.reads().contains(&fixing)
    }

    /// Number of distinct nested solves required from interval `k` downward.
    fn required_solves(&self, k: usize) -> u64 {
        let n = self.schedule.intervals();
        let mf = self.config.fixing_nodes as u64;
        let mut total = 0u64;
        let mut branch = 1u64;
        for j in k..n {
            total = total.saturating_add(branch);
            // extending past interval j introduces fixing j + 1
            if j + 1 < n && self.payoff_reads(j + 1) {
                branch = branch.saturating_mul(mf);
            }
        }
        total
    }

    /// Solve interval `k` for `prefix` = realized fixings plus fixing-grid
    /// extensions recorded in `ext` (grid indices of the extensions).
    fn interval_solution(
        &self,
        k: usize,
        prefix: &[Vec<f64>],
        ext: &[u32],
    ) -> Result<Arc<GridSolution>> {
        let key: MemoKey = (k, self.memo_key_for(ext));
        if self.config.memoize {
            if let Some(hit) = self.memo.lock().unwrap().get(&key) {
                return Ok(hit.clone());
            }
        }
        let n = self.schedule.intervals();
        let t_lo = self.schedule.time(k);
        let t_hi = self.schedule.time(k + 1);
        let mut spec = self.config.grid.clone();
        spec.steps = self.interval_steps(k);

        let solution = if k + 1 == n {
            // terminal condition is the payoff itself on the diagonal
            let terminal = move |x: &[f64]| -> f64 {
                let mut fixings: Vec<Vec<f64>> = prefix.to_vec();
                fixings.push(x.to_vec());
                self.payoff.eval(&fixings)
            };
            solve_tvp_with(self.model, &terminal, t_lo, t_hi, &spec, SolveOptions::default())?
        } else if !self.payoff_reads(k + 1) {
            // the frozen coordinate never matters: one nested solve supplies
            // the terminal slice node-for-node, and no damping start is
            // needed because a solved slice is smooth
            let center = {
                let a = self.config.grid.axes[0];
                let mid = 0.5 * (a.lo + a.hi);
                if self.model.flavor() == Flavor::Positive {
                    mid.exp()
                } else {
                    mid
                }
            };
            let mut next_prefix = prefix.to_vec();
            next_prefix.push(vec![center; self.model.dimension()]);
            // placeholder keeps extension offsets aligned with fixing
            // indices; ignored positions are filtered out of memo keys
            let mut next_ext = ext.to_vec();
            next_ext.push(0);
            let nested = self.interval_solution(k + 1, &next_prefix, &next_ext)?;
            let terminal =
                move |x: &[f64]| -> f64 { nested.value(t_hi, x).expect("shared grid covers node") };
            solve_tvp_with(
                self.model,
                &terminal,
                t_lo,
                t_hi,
                &spec,
                SolveOptions { rannacher: false },
            )?
        } else {
            // tabulate f_{k+1}(x) = v_{k+1}(t_{k+1}, prefix, x, x) on the
            // fixing grid, then interpolate cubically onto the PDE grid
            let mf = self.config.fixing_nodes;
            let mut table = Vec::with_capacity(mf);
            for q in 0..mf {
                let x_star = self.fixing_raw(q);
                let mut next_prefix = prefix.to_vec();
                next_prefix.push(vec![x_star]);
                let mut next_ext = ext.to_vec();
                next_ext.push(q as u32);
                let nested = self.interval_solution(k + 1, &next_prefix, &next_ext)?;
                table.push(nested.value(t_hi, &[x_star])?);
            }
            let step = self.fixing_native[1] - self.fixing_native[0];
            let spline = CubicSpline::fit(self.fixing_native[0], step, &table);
            let log_space = self.model.flavor() == Flavor::Positive;
            let terminal = move |x: &[f64]| -> f64 {
                let y = if log_space { x[0].ln() } else { x[0] };
                spline.eval(y)
            };
            solve_tvp_with(self.model, &terminal, t_lo, t_hi, &spec, SolveOptions::default())?
        };
        self.solves.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let arc = Arc::new(solution);
        if self.config.memoize {
            self.memo.lock().unwrap().insert(key, arc.clone());
        }
        Ok(arc)
    }

    /// Memo keys keep only the extensions at payoff-read fixings: branches
    /// that extend by an ignored fixing are identical solves.
    fn memo_key_for(&self, ext: &[u32]) -> Vec<u32> {
        let first_ext_fixing = self.realized.len();
        ext.iter()
            .enumerate()
            .filter(|(offset, _)| self.payoff_reads(first_ext_fixing + offset))
            .map(|(_, &q)| q)
            .collect()
    }
}

/// Build the scheme solution for the interval that the realized prefix has
/// reached: `prefix = [x_0, ..., x_k]` yields the surface on
/// `[t_k, t_{k+1}]`.
pub fn build_scheme(
    model: Arc<LocalVolModel>,
    schedule: Arc<FixingSchedule>,
    payoff: Arc<PayoffSpec>,
    prefix: Vec<Vec<f64>>,
    config: Arc<SchemeConfig>,
) -> Result<SchemeSolution> {
    let n = schedule.intervals();
    if prefix.is_empty() || prefix.len() > n {
        return Err(PathwiseError::Precondition(format!(
            "prefix length {} must lie in 1..={} (intervals)",
            prefix.len(),
            n
        )));
    }
    for x in &prefix {
        if x.len() != model.dimension() {
            return Err(PathwiseError::DimensionMismatch {
                expected: model.dimension(),
                got: x.len(),
            });
        }
        if model.flavor() == Flavor::Positive && x.iter().any(|&v| v <= 0.0) {
            return Err(PathwiseError::Validation(
                "positive-flavor prefix must be strictly positive".into(),
            ));
        }
    }
    if config.grid.dimension() != model.dimension() {
        return Err(PathwiseError::DimensionMismatch {
            expected: model.dimension(),
            got: config.grid.dimension(),
        });
    }
    if config.fixing_nodes < 4 {
        return Err(PathwiseError::Validation("fixing grid needs at least 4 nodes".into()));
    }
    let k = prefix.len() - 1;

    let mut warnings = Vec::new();
    if payoff.is_discontinuous() {
        warnings.push(
            "payoff is discontinuous; no Lipschitz guarantee, convergence is trend-only".into(),
        );
    } else {
        // spot-check the declared local-Lipschitz metadata over the grid's
        // raw range with a fixed stream
        let axis = config.grid.axes[0];
        let (lo, hi) = if model.flavor() == Flavor::Positive {
            (axis.lo.exp(), axis.hi.exp())
        } else {
            (axis.lo, axis.hi)
        };
        let mut rng = crate::rng::path_rng(0x4c6970, 0);
        let probe =
            payoff.lipschitz_probe(n, model.dimension(), lo, hi, 1000, &mut rng);
        if !probe.consistent {
            warnings.push(format!(
                "declared Lipschitz metadata inconsistent: observed ratio {:.3e} exceeds {:.3e}",
                probe.worst_ratio,
                payoff.lipschitz_const
            ));
        }
    }

    // the nested tabulation is one-dimensional; multi-asset payoffs must not
    // read intermediate fixings
    if model.dimension() > 1 {
        let reads = payoff.reads();
        if (k + 1..n).any(|j| reads.contains(&j)) {
            return Err(PathwiseError::Validation(
                "multi-asset schemes support payoffs reading only realized and terminal fixings"
                    .into(),
            ));
        }
    }

    let axis = config.grid.axes[0];
    let fixing_native: Vec<f64> = {
        let mf = config.fixing_nodes;
        // align with PDE nodes when the strides divide, so nested reads are
        // exact node lookups
        if (axis.nodes - 1).is_multiple_of(mf - 1) {
            let stride = (axis.nodes - 1) / (mf - 1);
            (0..mf).map(|q| axis.coord(q * stride)).collect()
        } else {
            (0..mf)
                .map(|q| axis.lo + (axis.hi - axis.lo) * q as f64 / (mf - 1) as f64)
                .collect()
        }
    };

    let builder = Builder {
        model: &model,
        schedule: &schedule,
        payoff: &payoff,
        config: &config,
        realized: &prefix,
        fixing_native,
        memo: Mutex::new(HashMap::new()),
        solves: std::sync::atomic::AtomicU64::new(0),
    };
    let required = builder.required_solves(k);
    if required > config.budget_cap {
        return Err(PathwiseError::BudgetExceeded { required, cap: config.budget_cap });
    }
    let grid = builder.interval_solution(k, &prefix, &[])?;
    let solves_used = builder.solves.load(std::sync::atomic::Ordering::Relaxed);
    Ok(SchemeSolution {
        model,
        schedule,
        payoff,
        config,
        interval: k,
        prefix,
        grid,
        warnings,
        solves_used,
    })
}

impl SchemeSolution {
    pub fn interval(&self) -> usize {
        self.interval
    }

    pub fn prefix(&self) -> &[Vec<f64>] {
        &self.prefix
    }

    pub fn grid(&self) -> &GridSolution {
        &self.grid
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn solves_used(&self) -> u64 {
        self.solves_used
    }

    pub fn model(&self) -> &LocalVolModel {
        &self.model
    }

    pub fn schedule(&self) -> &FixingSchedule {
        &self.schedule
    }

    pub fn payoff(&self) -> &PayoffSpec {
        &self.payoff
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let lo = self.schedule.time(self.interval);
        let hi = self.schedule.time(self.interval + 1);
        if t < lo - 1e-12 || t > hi + 1e-12 {
            return Err(PathwiseError::Precondition(format!(
                "t = {t} outside current interval [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    /// Value of the current surface at `(t, spot)`.
    pub fn value(&self, t: f64, spot: &[f64]) -> Result<f64> {
        self.check_time(t)?;
        self.grid.value(t, spot)
    }

    /// Hedge ratio: the spot gradient of the current surface at `(t, spot)`.
    pub fn delta(&self, t: f64, spot: &[f64]) -> Result<Vec<f64>> {
        self.check_time(t)?;
        self.grid.gradient(t, spot)
    }

    /// Clamped variants used by the hedging walk; the flag reports clamping.
    pub fn delta_clamped(&self, t: f64, spot: &[f64]) -> Result<(Vec<f64>, bool)> {
        self.check_time(t)?;
        self.grid.gradient_clamped(t, spot)
    }

    pub fn value_clamped(&self, t: f64, spot: &[f64]) -> Result<(f64, bool)> {
        self.check_time(t)?;
        self.grid.value_clamped(t, spot)
    }

    /// Consume the fixing observed at the end of the current interval.
    pub fn roll_fixing(&self, observed: &[f64]) -> Result<RollOutcome> {
        if observed.len() != self.model.dimension() {
            return Err(PathwiseError::DimensionMismatch {
                expected: self.model.dimension(),
                got: observed.len(),
            });
        }
        let mut prefix = self.prefix.clone();
        prefix.push(observed.to_vec());
        if self.interval + 1 == self.schedule.intervals() {
            // settlement only evaluates the payoff; no grid involved
            return Ok(RollOutcome::Settled { payoff: self.payoff.eval(&prefix) });
        }
        // a continuing roll anchors the next solve: the fixing must lie on
        // the shared grid
        let native = self.grid.to_native(observed)?;
        for (i, axis) in self.grid.axes().iter().enumerate() {
            if native[i] < axis.lo || native[i] > axis.hi {
                return Err(PathwiseError::OutsideGrid {
                    t: self.schedule.time(self.interval + 1),
                    x: observed.to_vec(),
                });
            }
        }
        let next = build_scheme(
            self.model.clone(),
            self.schedule.clone(),
            self.payoff.clone(),
            prefix,
            self.config.clone(),
        )?;
        Ok(RollOutcome::Next(next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::solver::solve_tvp;

    fn hierarchy() -> PartitionHierarchy {
        PartitionHierarchy::new(1.0, 12).unwrap()
    }

    fn positive_model(sigma: f64) -> Arc<LocalVolModel> {
        Arc::new(LocalVolModel::constant_1d(Flavor::Positive, sigma * sigma).unwrap())
    }

    fn scheme_grid(model: &LocalVolModel, nodes: usize, steps: usize) -> GridSpec {
        GridSpec::centered(model, &[100.0], 1.0, 6.0, nodes, steps).unwrap()
    }

    #[test]
    fn degenerate_single_interval_matches_direct_solve() {
        // N = 1, h = g(x_1): identical to one terminal-value solve
        let model = positive_model(0.2);
        let schedule =
            Arc::new(FixingSchedule::new(hierarchy(), &[0.0, 1.0]).unwrap());
        let payoff = Arc::new(PayoffSpec::parse("(call x1 100)", 0.0, 1.0).unwrap());
        let config = Arc::new(SchemeConfig::new(scheme_grid(&model, 401, 200)));
        let scheme = build_scheme(
            model.clone(),
            schedule,
            payoff,
            vec![vec![100.0]],
            config.clone(),
        )
        .unwrap();
        let direct = solve_tvp(
            &model,
            &|x: &[f64]| (x[0] - 100.0).max(0.0),
            0.0,
            1.0,
            &config.grid,
        )
        .unwrap();
        for (a, b) in scheme.grid().start_slice().iter().zip(direct.start_slice()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
        assert_eq!(scheme.solves_used(), 1);
    }

    #[test]
    fn terminal_spot_is_priced_at_par() {
        // N = 2, h = x_2: the value function is the spot itself
        let model = positive_model(0.2);
        let schedule =
            Arc::new(FixingSchedule::new(hierarchy(), &[0.0, 0.5, 1.0]).unwrap());
        let payoff = Arc::new(PayoffSpec::parse("x2", 0.0, 1.0).unwrap());
        let config = Arc::new(SchemeConfig::new(scheme_grid(&model, 801, 400)));
        let scheme =
            build_scheme(model, schedule, payoff, vec![vec![100.0]], config).unwrap();
        let v0 = scheme.value(0.0, &[100.0]).unwrap();
        assert!((v0 - 100.0).abs() / 100.0 < 2e-3, "v0 = {v0}");
        // ignoring the intermediate fixing collapses the nesting
        assert_eq!(scheme.solves_used(), 2);
    }

    #[test]
    fn constant_payoff_has_zero_delta() {
        let model = positive_model(0.2);
        let schedule =
            Arc::new(FixingSchedule::new(hierarchy(), &[0.0, 0.5, 1.0]).unwrap());
        let payoff = Arc::new(PayoffSpec::parse("7.5", 0.0, 1.0).unwrap());
        let config = Arc::new(SchemeConfig::new(scheme_grid(&model, 201, 100)));
        let scheme =
            build_scheme(model, schedule, payoff, vec![vec![100.0]], config).unwrap();
        for spot in [80.0, 100.0, 125.0] {
            let d = scheme.delta(0.25, &[spot]).unwrap()[0];
            assert!(d.abs() < 1e-12, "delta {d}");
            let v = scheme.value(0.25, &[spot]).unwrap();
            assert!((v - 7.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_payoff_is_rigid() {
        let model = positive_model(0.2);
        let schedule =
            Arc::new(FixingSchedule::new(hierarchy(), &[0.0, 0.5, 1.0]).unwrap());
        let payoff = Arc::new(PayoffSpec::parse("0", 0.0, 1.0).unwrap());
        let config = Arc::new(SchemeConfig::new(scheme_grid(&model, 201, 100)));
        let scheme =
            build_scheme(model, schedule, payoff, vec![vec![100.0]], config).unwrap();
        assert!(scheme.grid().start_slice().iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn roll_reaches_settlement() {
        let model = positive_model(0.2);
        let schedule =
            Arc::new(FixingSchedule::new(hierarchy(), &[0.0, 0.5, 1.0]).unwrap());
        let payoff = Arc::new(PayoffSpec::parse("(call (avg x1 x2) 100)", 0.0, 1.0).unwrap());
        let config = Arc::new(SchemeConfig::new(scheme_grid(&model, 401, 200)));
        let scheme =
            build_scheme(model, schedule, payoff, vec![vec![100.0]], config).unwrap();
        let rolled = match scheme.roll_fixing(&[104.0]).unwrap() {
            RollOutcome::Next(s) => s,
            RollOutcome::Settled { .. } => panic!("should continue"),
        };
        assert_eq!(rolled.interval(), 1);
        // value continuity at the roll point
        let before = scheme.value(0.5, &[104.0]).unwrap();
        let after = rolled.value(0.5, &[104.0]).unwrap();
        assert!(
            (before - after).abs() < 0.05,
            "continuity gap {}",
            (before - after).abs()
        );
        match rolled.roll_fixing(&[110.0]).unwrap() {
            RollOutcome::Settled { payoff } => assert!((payoff - 7.0).abs() < 1e-12),
            RollOutcome::Next(_) => panic!("schedule exhausted"),
        }
    }

    #[test]
    fn payoff_ignoring_intermediate_fixing_is_flat_in_it() {
        // rolled surfaces for different observed x_1 coincide when the
        // payoff never reads x_1
        let model = positive_model(0.2);
        let schedule =
            Arc::new(FixingSchedule::new(hierarchy(), &[0.0, 0.5, 1.0]).unwrap());
        let payoff = Arc::new(PayoffSpec::parse("(call x2 100)", 0.0, 1.0).unwrap());
        let config = Arc::new(SchemeConfig::new(scheme_grid(&model, 401, 200)));
        let scheme =
            build_scheme(model, schedule, payoff, vec![vec![100.0]], config).unwrap();
        let roll = |x: f64| match scheme.roll_fixing(&[x]).unwrap() {
            RollOutcome::Next(s) => s,
            _ => panic!(),
        };
        let a = roll(90.0);
        let b = roll(115.0);
        for (u, v) in a.grid().start_slice().iter().zip(b.grid().start_slice()) {
            assert!((u - v).abs() <= 1e-9 * v.abs().max(1.0));
        }
    }

    #[test]
    fn memoized_and_direct_builds_agree() {
        let model = positive_model(0.25);
        let schedule =
            Arc::new(FixingSchedule::new(hierarchy(), &[0.0, 0.5, 1.0]).unwrap());
        let payoff = Arc::new(PayoffSpec::parse("(call (avg x1 x2) 100)", 0.0, 1.0).unwrap());
        let base = SchemeConfig::new(scheme_grid(&model, 161, 80));
        let mut plain = base.clone();
        plain.memoize = false;
        let with_memo = build_scheme(
            model.clone(),
            schedule.clone(),
            payoff.clone(),
            vec![vec![100.0]],
            Arc::new(base),
        )
        .unwrap();
        let without = build_scheme(model, schedule, payoff, vec![vec![100.0]], Arc::new(plain))
            .unwrap();
        for (a, b) in with_memo
            .grid()
            .start_slice()
            .iter()
            .zip(without.grid().start_slice())
        {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn budget_guard_fires() {
        let model = positive_model(0.2);
        let level = PartitionHierarchy::new(1.0, 12).unwrap();
        let schedule = Arc::new(
            FixingSchedule::new(level, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap(),
        );
        let payoff =
            Arc::new(PayoffSpec::parse("(call (avg x1 x2 x3 x4) 100)", 0.0, 1.0).unwrap());
        let mut config = SchemeConfig::new(scheme_grid(&model, 201, 100));
        config.budget_cap = 1000;
        let out = build_scheme(model, schedule, payoff, vec![vec![100.0]], Arc::new(config));
        assert!(matches!(out, Err(PathwiseError::BudgetExceeded { .. })));
    }

    #[test]
    fn roll_rejects_fixing_outside_grid() {
        let model = positive_model(0.2);
        let schedule = Arc::new(
            FixingSchedule::new(hierarchy(), &[0.0, 0.25, 0.5, 1.0]).unwrap(),
        );
        let payoff = Arc::new(PayoffSpec::parse("(call (avg x1 x2 x3) 100)", 0.0, 1.0).unwrap());
        let config = Arc::new(SchemeConfig::new(scheme_grid(&model, 161, 64)));
        let scheme =
            build_scheme(model, schedule, payoff, vec![vec![100.0]], config).unwrap();
        // continuing roll outside the grid fails loudly
        assert!(matches!(
            scheme.roll_fixing(&[1e6]),
            Err(PathwiseError::OutsideGrid { .. })
        ));
        // schedule exhaustion settles instead of solving, even off-grid
        let rolled = match scheme.roll_fixing(&[100.0]).unwrap() {
            RollOutcome::Next(s) => s,
            _ => panic!(),
        };
        let last = match rolled.roll_fixing(&[104.0]).unwrap() {
            RollOutcome::Next(s) => s,
            _ => panic!(),
        };
        match last.roll_fixing(&[1e6]).unwrap() {
            RollOutcome::Settled { payoff } => assert!(payoff > 0.0),
            _ => panic!("must settle at the horizon"),
        }
    }

    #[test]
    fn schedule_validation() {
        let h = hierarchy();
        assert!(FixingSchedule::new(h, &[0.0, 0.5, 1.0]).is_ok());
        assert!(FixingSchedule::new(h, &[0.1, 1.0]).is_err());
        assert!(FixingSchedule::new(h, &[0.0, 0.7]).is_err());
        assert!(FixingSchedule::new(h, &[0.0, 0.5, 0.5, 1.0]).is_err());
        // off-grid time
        assert!(FixingSchedule::new(h, &[0.0, 0.333, 1.0]).is_err());
    }
}
