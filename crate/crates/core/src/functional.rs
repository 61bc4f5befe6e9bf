//! Non-anticipative functionals with a finite-dimensional running state, and
//! residual checks of the path-dependent backward equation.
//!
//! A functional here is `F_t(X_t) = u(t, X(t), s(t))` where `s(t)` is a
//! running statistic of the path: nothing (terminal value map), the running
//! integral, or the running maximum. Vertical derivatives bump the path
//! endpoint, horizontal derivatives extend the path with a frozen endpoint
//! while the state keeps accruing; both are difference quotients of the
//! functional evaluation itself.
//!
//! Grid-backed value maps are evaluated through interpolation that is C^2 in
//! the bumped coordinate (natural cubic splines), so second difference
//! quotients with bumps far below the grid spacing recover curvature rather
//! than interpolation noise.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::analytic::lookback_running_max_value;
use crate::error::{PathwiseError, Result};
use crate::lattice::grid::{Axis, GridSolution};
use crate::lattice::model::LocalVolModel;
use crate::lattice::model::CovarianceFamily;
use crate::lattice::solver::{theta_step_1d, Coefficients1d, Workspace1d};
use crate::path::{Flavor, SampledPath};
use crate::spline::CubicSpline;

/// The running statistic that lifts a path functional to finitely many
/// state variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    /// No auxiliary state: `F_t = u(t, X(t))`.
    Terminal,
    /// Left-endpoint running integral `s(t) = int_0^t X(u) du`.
    RunningIntegral,
    /// Running maximum `s(t) = max_{u <= t} X(u)` (dimension 1).
    RunningMaximum,
}

/// Running state along the nodes of one partition level, plus the state with
/// the endpoint excluded (needed when a vertical bump can move the
/// statistic itself).
pub(crate) struct StateCurve {
    pub with_endpoint: Vec<f64>,
    pub without_endpoint: Vec<f64>,
}

pub(crate) fn state_curve(kind: StateKind, path: &SampledPath, level: u32) -> StateCurve {
    let nodes = path.hierarchy().nodes(level);
    let dt = path.hierarchy().mesh(level);
    let mut with_endpoint = vec![0.0f64; nodes];
    let mut without_endpoint = vec![0.0f64; nodes];
    match kind {
        StateKind::Terminal => {}
        StateKind::RunningIntegral => {
            let mut acc = 0.0f64;
            for k in 0..nodes {
                with_endpoint[k] = acc;
                without_endpoint[k] = acc;
                acc += path.node_at_level(level, k)[0] * dt;
            }
        }
        StateKind::RunningMaximum => {
            let mut prev = f64::MIN;
            for k in 0..nodes {
                let x = path.node_at_level(level, k)[0];
                without_endpoint[k] = if k == 0 { x } else { prev };
                prev = prev.max(x);
                with_endpoint[k] = prev;
            }
        }
    }
    StateCurve { with_endpoint, without_endpoint }
}

/// Smooth evaluator over the time slices of a solved grid: quadratic in
/// time, natural cubic spline along axis 0 (the bumped coordinate), local
/// cubic across axis 1.
struct SmoothSlices {
    solution: Arc<GridSolution>,
    /// Cache of axis-0 splines keyed by `(time slice, axis-1 index)`.
    splines: Mutex<HashMap<(u32, u32), Arc<CubicSpline>>>,
    /// Whether axis-1 interpolation should be a full natural spline (C^2)
    /// instead of the 4-point local cubic (C^1).
    full_second_axis: bool,
}

impl SmoothSlices {
    fn new(solution: Arc<GridSolution>, full_second_axis: bool) -> Self {
        Self { solution, splines: Mutex::new(HashMap::new()), full_second_axis }
    }

    fn axis(&self, i: usize) -> Axis {
        self.solution.axes()[i]
    }

    fn spline_for(&self, slice: usize, line: usize) -> Arc<CubicSpline> {
        let key = (slice as u32, line as u32);
        if let Some(hit) = self.splines.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let axis0 = self.axis(0);
        let vals = self.solution.slice(slice);
        let row: Vec<f64> = match self.solution.dimension() {
            1 => vals.to_vec(),
            _ => {
                let n2 = self.axis(1).nodes;
                (0..axis0.nodes).map(|i| vals[i * n2 + line]).collect()
            }
        };
        let spline = Arc::new(CubicSpline::fit(axis0.lo, axis0.step(), &row));
        self.splines.lock().unwrap().insert(key, spline.clone());
        spline
    }

    /// Value of one time slice at a native point.
    fn slice_value(&self, slice: usize, y: &[f64]) -> f64 {
        match self.solution.dimension() {
            1 => self.spline_for(slice, 0).eval(y[0]),
            _ => {
                let axis1 = self.axis(1);
                if self.full_second_axis {
                    let g: Vec<f64> = (0..axis1.nodes)
                        .map(|j| self.spline_for(slice, j).eval(y[0]))
                        .collect();
                    CubicSpline::fit(axis1.lo, axis1.step(), &g).eval(y[1])
                } else {
                    // 4-point local cubic (Catmull-Rom) across axis 1
                    let h = axis1.step();
                    let u = ((y[1] - axis1.lo) / h).floor() as isize;
                    let j = u.clamp(0, axis1.nodes as isize - 2) as usize;
                    let w = ((y[1] - axis1.coord(j)) / h).clamp(0.0, 1.0);
                    let jm = j.saturating_sub(1);
                    let jp = (j + 1).min(axis1.nodes - 1);
                    let jpp = (j + 2).min(axis1.nodes - 1);
                    let p0 = self.spline_for(slice, jm).eval(y[0]);
                    let p1 = self.spline_for(slice, j).eval(y[0]);
                    let p2 = self.spline_for(slice, jp).eval(y[0]);
                    let p3 = self.spline_for(slice, jpp).eval(y[0]);
                    let (m1, m2) = if j == 0 {
                        (p2 - p1, 0.5 * (p3 - p1))
                    } else if jp == axis1.nodes - 1 {
                        (0.5 * (p2 - p0), p2 - p1)
                    } else {
                        (0.5 * (p2 - p0), 0.5 * (p3 - p1))
                    };
                    let w2 = w * w;
                    let w3 = w2 * w;
                    p1 * (2.0 * w3 - 3.0 * w2 + 1.0)
                        + m1 * (w3 - 2.0 * w2 + w)
                        + p2 * (-2.0 * w3 + 3.0 * w2)
                        + m2 * (w3 - w2)
                }
            }
        }
    }

    /// Smooth space-time evaluation: quadratic through the three nearest
    /// time slices (falling back to linear at the ends of one-step grids).
    fn eval(&self, t: f64, y: &[f64]) -> f64 {
        let sol = &self.solution;
        let dt = sol.dt();
        let steps = sol.steps();
        let u = ((t - sol.t_start()) / dt).clamp(0.0, steps as f64);
        if steps < 2 {
            let m = (u.floor() as usize).min(steps.saturating_sub(1));
            let w = u - m as f64;
            let lo = self.slice_value(m, y);
            if w == 0.0 {
                return lo;
            }
            return lo * (1.0 - w) + self.slice_value(m + 1, y) * w;
        }
        // center slice for the 3-point quadratic
        let c = (u.round() as usize).clamp(1, steps - 1);
        let s = u - c as f64; // in [-1.5, 1.5] around the center slice
        let vm = self.slice_value(c - 1, y);
        let v0 = self.slice_value(c, y);
        let vp = self.slice_value(c + 1, y);
        v0 + 0.5 * s * (vp - vm) + 0.5 * s * s * (vp - 2.0 * v0 + vm)
    }
}

/// How the value map `u(t, x, s)` is supplied.
enum ValueMap {
    /// A lattice solution in the path variable only (terminal kind).
    Surface(SmoothSlices),
    /// Closed form `(t, x_raw, s) -> value`, possibly wrapping a smoothly
    /// interpolated solve in transformed coordinates.
    Closed {
        name: String,
        #[allow(clippy::type_complexity)]
        f: Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>,
    },
}

/// A non-anticipative functional represented through a running state.
pub struct AugmentedFunctional {
    state: StateKind,
    flavor: Flavor,
    dimension: usize,
    horizon: f64,
    value: ValueMap,
    /// Terminal payoff `H` as a function of `(X(T), s(T))`; used for the
    /// terminal-consistency check. Shares the evaluation conventions of the
    /// value map.
    #[allow(clippy::type_complexity)]
    terminal_payoff: Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>,
    /// `(spatial step, time step)` of the backing grid, when there is one.
    scales: Option<(f64, f64)>,
}

impl AugmentedFunctional {
    pub fn state_kind(&self) -> StateKind {
        self.state
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    /// `(spatial step, time step)` of the grid behind the value map, for
    /// residual tolerances proportional to the truncation order. `None` for
    /// purely closed forms.
    pub fn grid_scales(&self) -> Option<(f64, f64)> {
        self.scales
    }

    /// Name of the value-map backing, for reports.
    pub fn describe(&self) -> String {
        match &self.value {
            ValueMap::Surface(_) => "terminal value surface".into(),
            ValueMap::Closed { name, .. } => name.clone(),
        }
    }

    /// Evaluate `u(t, x, s)` with raw spot coordinates.
    pub fn eval_state(&self, t: f64, x: &[f64], s: f64) -> Result<f64> {
        if x.len() != self.dimension {
            return Err(PathwiseError::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        if self.flavor == Flavor::Positive && x.iter().any(|&v| v <= 0.0) {
            return Err(PathwiseError::Validation(
                "positive-flavor functional query needs positive spot".into(),
            ));
        }
        match &self.value {
            ValueMap::Surface(eval) => {
                let y = eval.solution.to_native(x)?;
                Ok(eval.eval(t, &y))
            }
            ValueMap::Closed { f, .. } => Ok(f(t, x, s)),
        }
    }

    /// Evaluate the functional along a sampled path at a level node.
    pub fn value_at_node(&self, path: &SampledPath, level: u32, k: usize) -> Result<f64> {
        let states = state_curve(self.state, path, level);
        let t = path.hierarchy().time(level, k);
        self.eval_state(t, path.node_at_level(level, k), states.with_endpoint[k])
    }

    /// Terminal functional value `F_T(X_T)` and the payoff `H(X_T)` it must
    /// reproduce.
    pub fn terminal_consistency(&self, path: &SampledPath, level: u32) -> Result<(f64, f64)> {
        let states = state_curve(self.state, path, level);
        let last = path.hierarchy().nodes(level) - 1;
        let x = path.node_at_level(level, last);
        let s = states.with_endpoint[last];
        let f_t = self.eval_state(self.horizon, x, s)?;
        let h = (self.terminal_payoff)(x, s);
        Ok((f_t, h))
    }
}

/// First and second vertical derivatives at one path point.
#[derive(Debug, Clone)]
pub struct VerticalDerivatives {
    pub first: Vec<f64>,
    /// Row-major `d x d`, symmetric by construction of the mixed stencil.
    pub second: Vec<f64>,
}

/// Central difference quotients of the functional under endpoint bumps
/// `X(u) <- X(u) + h e_i 1_{[t, T]}`, evaluated at time `t`'s node of the
/// given level.
pub fn vertical_derivative(
    functional: &AugmentedFunctional,
    path: &SampledPath,
    level: u32,
    t: f64,
    bump: f64,
) -> Result<VerticalDerivatives> {
    let d = functional.dimension();
    if path.dimension() != d {
        return Err(PathwiseError::DimensionMismatch { expected: d, got: path.dimension() });
    }
    if bump.is_nan() || bump <= 0.0 {
        return Err(PathwiseError::Validation("bump must be positive".into()));
    }
    let k = path.hierarchy().node_index(level, t)?;
    let states = state_curve(functional.state, path, level);
    let x0 = path.node_at_level(level, k).to_vec();
    if functional.flavor == Flavor::Positive {
        for &xi in &x0 {
            if xi - bump <= 0.0 {
                return Err(PathwiseError::Validation(
                    "bump would push a positive-flavor spot non-positive".into(),
                ));
            }
        }
    }

    // the running state under a bumped endpoint
    let state_of = |x: &[f64]| -> f64 {
        match functional.state {
            StateKind::Terminal | StateKind::RunningIntegral => states.with_endpoint[k],
            StateKind::RunningMaximum => states.without_endpoint[k].max(x[0]),
        }
    };
    let eval = |x: &[f64]| -> Result<f64> { functional.eval_state(t, x, state_of(x)) };

    let center = eval(&x0)?;
    let mut first = vec![0.0f64; d];
    let mut second = vec![0.0f64; d * d];
    let shifted = |i: usize, sign: f64| -> Vec<f64> {
        let mut x = x0.clone();
        x[i] += sign * bump;
        x
    };
    for i in 0..d {
        let up = eval(&shifted(i, 1.0))?;
        let down = eval(&shifted(i, -1.0))?;
        first[i] = (up - down) / (2.0 * bump);
        second[i * d + i] = (up - 2.0 * center + down) / (bump * bump);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let mut x = x0.clone();
            x[i] += bump;
            x[j] += bump;
            let pp = eval(&x)?;
            x[j] -= 2.0 * bump;
            let pm = eval(&x)?;
            x[i] -= 2.0 * bump;
            let mm = eval(&x)?;
            x[j] += 2.0 * bump;
            let mp = eval(&x)?;
            let mixed = (pp - pm - mp + mm) / (4.0 * bump * bump);
            second[i * d + j] = mixed;
            second[j * d + i] = mixed;
        }
    }
    Ok(VerticalDerivatives { first, second })
}

/// Difference quotient of the functional along the horizontally extended
/// path: the endpoint is frozen while time and the running state advance.
pub fn horizontal_derivative(
    functional: &AugmentedFunctional,
    path: &SampledPath,
    level: u32,
    t: f64,
    dt: f64,
) -> Result<f64> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(PathwiseError::Validation("dt must be positive".into()));
    }
    let finest = path.hierarchy().mesh(path.hierarchy().max_level());
    if dt > finest * (1.0 + 1e-9) {
        return Err(PathwiseError::Validation(format!(
            "dt = {dt} exceeds the finest mesh {finest}"
        )));
    }
    if t + dt > functional.horizon() + 1e-12 {
        return Err(PathwiseError::Precondition("t + dt beyond the horizon".into()));
    }
    let k = path.hierarchy().node_index(level, t)?;
    let states = state_curve(functional.state, path, level);
    let x = path.node_at_level(level, k);
    let s = states.with_endpoint[k];
    let s_advanced = match functional.state {
        StateKind::Terminal => s,
        StateKind::RunningIntegral => s + x[0] * dt,
        StateKind::RunningMaximum => s, // a frozen endpoint cannot raise the max
    };
    let now = functional.eval_state(t, x, s)?;
    let later = functional.eval_state(t + dt, x, s_advanced)?;
    Ok((later - now) / dt)
}

/// One sampled residual of the path-dependent backward equation.
#[derive(Debug, Clone)]
pub struct FtvpSample {
    pub t: f64,
    pub x: f64,
    pub state: f64,
    pub horizontal: f64,
    pub diffusion_term: f64,
    pub residual: f64,
}

/// Residual report over a sample of `(path, time)` points.
#[derive(Debug, Clone)]
pub struct FtvpReport {
    pub samples: Vec<FtvpSample>,
    pub sup_residual: f64,
    /// Largest `|F_T - H|` over the sampled paths.
    pub terminal_gap: f64,
}

/// Evaluate `D F + (1/2) sum a_ij (w_ij) grad2_ij F` at every `(path, t)`
/// combination, with weights `w_ij = X_i X_j` for the positive flavor, and
/// check the terminal condition on each path.
pub fn ftvp_residual(
    functional: &AugmentedFunctional,
    model: &LocalVolModel,
    paths: &[SampledPath],
    times: &[f64],
    level: u32,
    bump_scale: f64,
) -> Result<FtvpReport> {
    if model.dimension() != functional.dimension() {
        return Err(PathwiseError::DimensionMismatch {
            expected: functional.dimension(),
            got: model.dimension(),
        });
    }
    let d = functional.dimension();
    let mut samples = Vec::with_capacity(paths.len() * times.len());
    let mut sup = 0.0f64;
    let mut terminal_gap = 0.0f64;
    for path in paths {
        let states = state_curve(functional.state, path, level);
        for &t in times {
            let k = path.hierarchy().node_index(level, t)?;
            let x = path.node_at_level(level, k);
            let bump = bump_scale * x[0].abs().max(1.0);
            // the horizontal quotient uses the finest mesh regardless of the
            // sampling level
            let dt = path.hierarchy().mesh(path.hierarchy().max_level());
            let vertical = vertical_derivative(functional, path, level, t, bump)?;
            let horizontal = horizontal_derivative(functional, path, level, t, dt)?;
            let a = model.covariance(t, x);
            let mut diffusion = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let w = match model.flavor() {
                        Flavor::WholeSpace => 1.0,
                        Flavor::Positive => x[i] * x[j],
                    };
                    diffusion += 0.5 * a.get(i, j) * w * vertical.second[i * d + j];
                }
            }
            let residual = horizontal + diffusion;
            sup = sup.max(residual.abs());
            samples.push(FtvpSample {
                t,
                x: x[0],
                state: states.with_endpoint[k],
                horizontal,
                diffusion_term: diffusion,
                residual,
            });
        }
        let (f_t, h) = functional.terminal_consistency(path, level)?;
        terminal_gap = terminal_gap.max((f_t - h).abs());
    }
    Ok(FtvpReport { samples, sup_residual: sup, terminal_gap })
}

/// Maximum discrepancy of the functional self-financing identity
/// `F_t = F_0 + int grad F . dS` along one path at one level, with the
/// integral as left-endpoint Riemann sums of the vertical gradient.
pub fn functional_hedge_check(
    functional: &AugmentedFunctional,
    path: &SampledPath,
    level: u32,
    bump_scale: f64,
) -> Result<f64> {
    path.hierarchy().check_level(level)?;
    let d = functional.dimension();
    let nodes = path.hierarchy().nodes(level);
    let states = state_curve(functional.state, path, level);
    let f0 = functional.eval_state(0.0, path.node_at_level(level, 0), states.with_endpoint[0])?;
    let mut integral = 0.0f64;
    let mut worst = 0.0f64;
    for k in 0..nodes - 1 {
        let t = path.hierarchy().time(level, k);
        let x = path.node_at_level(level, k);
        let bump = bump_scale * x[0].abs().max(1.0);
        let grad = vertical_derivative(functional, path, level, t, bump)?.first;
        let x_next = path.node_at_level(level, k + 1);
        for i in 0..d {
            integral += grad[i] * (x_next[i] - x[i]);
        }
        let t_next = path.hierarchy().time(level, k + 1);
        let f_next =
            functional.eval_state(t_next, x_next, states.with_endpoint[k + 1])?;
        worst = worst.max((f_next - f0 - integral).abs());
    }
    Ok(worst)
}

/// Resolution of the augmented Asian solve.
#[derive(Debug, Clone)]
pub struct AsianGridSpec {
    pub steps: usize,
    pub zeta_nodes: usize,
    /// Half-width of the covered log-spot range in diffusion standard
    /// deviations; with the running integral covered accordingly.
    pub span_sigmas: f64,
}

impl Default for AsianGridSpec {
    fn default() -> Self {
        Self { steps: 320, zeta_nodes: 12001, span_sigmas: 6.0 }
    }
}

/// Coefficients of the reduced equation in the co-moving frame
/// `z' = z - (T - t)`: pure diffusion `sigma^2 (z' + (T - t))^2`, no drift.
struct ScaledAsianCoefficients {
    sigma_sq: f64,
    horizon: f64,
}

impl Coefficients1d for ScaledAsianCoefficients {
    fn a(&self, t: f64, zp: f64) -> f64 {
        let z = zp + (self.horizon - t);
        self.sigma_sq * z * z
    }

    fn b(&self, _t: f64, _zp: f64) -> f64 {
        0.0
    }
}

/// Build the fixed-strike continuously averaged Asian call as an augmented
/// functional: state `s(t) = int_0^t S du`, terminal payoff
/// `(s / T - strike)^+`.
///
/// For constant covariance the two-state value map scales out the spot:
/// `u(t, x, s) = x g(t, z)` with `z = (strike T - s) / x`, where `g` solves
/// the one-variable equation `dg/dt - dg/dz + (1/2) sigma^2 z^2 g_zz = 0`,
/// `g(T, z) = (-z/T)^+`. The unit-speed transport is absorbed by the
/// co-moving coordinate `z' = z - (T - t)`, leaving a pure diffusion with
/// coefficient `sigma^2 (z' + (T - t))^2` that Crank-Nicolson with a
/// Rannacher start handles directly; the deep in- and out-of-the-money
/// boundary values are time-independent in this frame, so the linearity
/// boundary rows are exact.
pub fn asian_call_functional(
    model: Arc<LocalVolModel>,
    spot: f64,
    strike: f64,
    horizon: f64,
    spec: &AsianGridSpec,
) -> Result<AugmentedFunctional> {
    let solution = solve_scaled_asian(&model, spot, strike, horizon, spec)?;
    let scales = Some((solution.axes()[0].step(), solution.dt()));
    let g = Arc::new(SmoothSlices::new(Arc::new(solution), false));
    let strike_level = strike * horizon;
    let value = move |t: f64, x: &[f64], s: f64| -> f64 {
        if t >= horizon {
            // the terminal slice is the payoff itself; bypassing the
            // interpolant keeps terminal consistency exact
            return (s / horizon - strike).max(0.0);
        }
        // co-moving frame: z' = (strike T - s)/x - (T - t)
        let zp = (strike_level - s) / x[0] - (horizon - t);
        x[0] * g.eval(t, &[zp])
    };
    let payoff = move |_x: &[f64], s: f64| (s / horizon - strike).max(0.0);
    Ok(AugmentedFunctional {
        state: StateKind::RunningIntegral,
        flavor: Flavor::Positive,
        dimension: 1,
        horizon,
        value: ValueMap::Closed {
            name: "average-price call (scaled one-variable reduction)".into(),
            f: Arc::new(value),
        },
        terminal_payoff: Arc::new(payoff),
        scales,
    })
}

/// The one-variable solve behind [`asian_call_functional`].
fn solve_scaled_asian(
    model: &LocalVolModel,
    spot: f64,
    strike: f64,
    horizon: f64,
    spec: &AsianGridSpec,
) -> Result<GridSolution> {
    if model.dimension() != 1 || model.flavor() != Flavor::Positive {
        return Err(PathwiseError::Precondition(
            "the Asian functional needs a one-dimensional positive-flavor model".into(),
        ));
    }
    let sigma_sq = match model.family() {
        CovarianceFamily::Constant(m) => m.get(0, 0),
        _ => {
            return Err(PathwiseError::Precondition(
                "the scaling reduction of the Asian equation needs constant covariance".into(),
            ));
        }
    };
    if spot <= 0.0 || strike <= 0.0 {
        return Err(PathwiseError::Validation("spot and strike must be positive".into()));
    }
    let steps = spec.steps.max(8);
    let dt = horizon / steps as f64;

    // query range of z over spots within the configured band and running
    // integrals up to four deviations above the spot scale; the co-moving
    // frame additionally reaches down by the full horizon
    let width = spec.span_sigmas * (model.bound() * horizon).sqrt();
    let x_lo = spot * (-width).exp();
    let s_hi = horizon * spot * (4.0 * (model.bound() * horizon).sqrt()).exp();
    let zp_hi = strike * horizon / x_lo;
    let zp_lo = (strike * horizon - s_hi) / x_lo - horizon;
    // anchor the grid on multiples of the step so the terminal kink at
    // z' = 0 sits on a node
    let h = (zp_hi - zp_lo) / (spec.zeta_nodes.max(64) - 1) as f64;
    let j_lo = (zp_lo / h).floor() as i64 - 2;
    let j_hi = (zp_hi / h).ceil() as i64 + 2;
    let n = (j_hi - j_lo + 1) as usize;
    let axis = Axis::new(j_lo as f64 * h, j_hi as f64 * h, n)?;

    let mut values = vec![Vec::new(); steps + 1];
    values[steps] = (0..n)
        .map(|j| (-axis.coord(j) / horizon).max(0.0))
        .collect();

    let coef = ScaledAsianCoefficients { sigma_sq, horizon };
    let mut work = Workspace1d::new(n);
    for m in (0..steps).rev() {
        let t_hi = dt * (m + 1) as f64;
        let t_lo = dt * m as f64;
        let known = &values[m + 1];
        values[m] = if m + 1 == steps {
            // Rannacher start against the terminal kink
            let mid =
                theta_step_1d(&coef, axis.lo, h, n, known, t_hi, t_hi - 0.5 * dt, 1.0, &mut work);
            theta_step_1d(&coef, axis.lo, h, n, &mid, t_hi - 0.5 * dt, t_lo, 1.0, &mut work)
        } else {
            theta_step_1d(&coef, axis.lo, h, n, known, t_hi, t_lo, 0.5, &mut work)
        };
    }

    Ok(GridSolution {
        axes: vec![axis],
        t_start: 0.0,
        t_end: horizon,
        steps,
        values,
        log_space: false,
        eval_margin: vec![0.0],
    })
}

/// Wrap a lattice solution as a functional with no path dependence.
pub fn terminal_functional(solution: Arc<GridSolution>) -> AugmentedFunctional {
    let dimension = solution.dimension();
    let horizon = solution.t_end();
    let flavor = if solution.log_space() { Flavor::Positive } else { Flavor::WholeSpace };
    let terminal = solution.clone();
    let payoff = move |x: &[f64], _s: f64| -> f64 {
        terminal
            .value(terminal.t_end(), x)
            .expect("terminal query inside grid")
    };
    let scales = Some((solution.axes()[0].step(), solution.dt()));
    AugmentedFunctional {
        state: StateKind::Terminal,
        flavor,
        dimension,
        horizon,
        value: ValueMap::Surface(SmoothSlices::new(solution, true)),
        terminal_payoff: Arc::new(payoff),
        scales,
    }
}

/// The running-maximum functional `F_t = E-free closed form` for a constant
/// volatility positive model: the value of receiving the terminal running
/// maximum.
pub fn lookback_max_functional(sigma: f64, horizon: f64) -> Result<AugmentedFunctional> {
    if !(sigma.is_finite() && sigma > 0.0 && horizon.is_finite() && horizon > 0.0) {
        return Err(PathwiseError::Validation("need sigma > 0 and horizon > 0".into()));
    }
    let f = move |t: f64, x: &[f64], m: f64| -> f64 {
        let tau = (horizon - t).max(0.0);
        lookback_running_max_value(x[0], m.max(x[0]), sigma, tau)
    };
    Ok(AugmentedFunctional {
        state: StateKind::RunningMaximum,
        flavor: Flavor::Positive,
        dimension: 1,
        horizon,
        value: ValueMap::Closed { name: "lookback running maximum".into(), f: Arc::new(f) },
        terminal_payoff: Arc::new(|_x: &[f64], m: f64| m),
        scales: None,
    })
}

/// A closed-form functional, mainly for tests: `u(t, x, s)` given directly.
#[allow(clippy::type_complexity)]
pub fn closed_functional(
    name: &str,
    state: StateKind,
    flavor: Flavor,
    dimension: usize,
    horizon: f64,
    f: Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>,
    terminal_payoff: Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>,
) -> AugmentedFunctional {
    AugmentedFunctional {
        state,
        flavor,
        dimension,
        horizon,
        value: ValueMap::Closed { name: name.into(), f },
        terminal_payoff,
        scales: None,
    }
}
