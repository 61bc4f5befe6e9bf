//! Backward solvers for the terminal-value problem `dv/dt + L v = 0`.
//!
//! In one dimension the scheme is Crank-Nicolson with tridiagonal solves and
//! a Rannacher start (the first backward step is taken as two fully implicit
//! half-steps, which damps the oscillations that non-smooth terminal data
//! would otherwise excite). In two dimensions the scheme is explicit time
//! stepping with central differences, cross term included, under the CFL
//! guard `dt <= h^2 / (2 d max|a|)`.
//!
//! Positive-flavor models are solved in log coordinates with diffusion
//! `a(t, exp(y))` and drift `-a_ii(t, exp(y)) / 2`; the grid spec is then
//! interpreted in log space. All boundaries carry the "linearity" condition:
//! the second spatial derivative is set to zero, which leaves payoff-like
//! terminal data undistorted without imposing Dirichlet values.

use crate::error::{PathwiseError, Result};
use crate::lattice::grid::{GridSolution, GridSpec};
use crate::lattice::model::LocalVolModel;
use crate::lattice::tridiag;
use crate::path::Flavor;

/// Multiplier on the diffusion deviation `sqrt(bound * horizon)` that sets
/// the evaluation margin of a solved grid.
const EVAL_MARGIN_SIGMAS: f64 = 4.0;

pub(crate) struct NativeOperator<'m> {
    model: &'m LocalVolModel,
    log_space: bool,
}

impl<'m> NativeOperator<'m> {
    pub(crate) fn new(model: &'m LocalVolModel) -> Self {
        Self { model, log_space: model.flavor() == Flavor::Positive }
    }

    /// Diffusion entry `a_ij` in native coordinates.
    pub(crate) fn diffusion(&self, t: f64, y: &[f64]) -> crate::lattice::model::CovMatrix {
        if self.log_space {
            let x: Vec<f64> = y.iter().map(|v| v.exp()).collect();
            self.model.covariance(t, &x)
        } else {
            self.model.covariance(t, y)
        }
    }

    /// Drift entry `b_i` in native coordinates (zero unless log space).
    pub(crate) fn drift(&self, t: f64, y: &[f64], i: usize) -> f64 {
        if self.log_space {
            -0.5 * self.diffusion(t, y).get(i, i)
        } else {
            0.0
        }
    }
}

/// Scalar diffusion/drift coefficients of a one-dimensional operator
/// `(1/2) a(t, y) d2/dy2 + b(t, y) d/dy`.
pub(crate) trait Coefficients1d {
    fn a(&self, t: f64, y: f64) -> f64;
    fn b(&self, t: f64, y: f64) -> f64;
}

impl<'m> Coefficients1d for NativeOperator<'m> {
    fn a(&self, t: f64, y: f64) -> f64 {
        self.diffusion(t, &[y]).get(0, 0)
    }

    fn b(&self, t: f64, y: f64) -> f64 {
        self.drift(t, &[y], 0)
    }
}

/// Stepping options. `rannacher` controls whether the first backward step is
/// taken as two fully implicit half-steps; it damps the oscillations kinked
/// terminal data excites and is the default. Smooth terminal slices (for
/// example re-sampled from another solve) can skip it, which makes chaining
/// solves across matching time grids exact.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub rannacher: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { rannacher: true }
    }
}

/// Solve the terminal-value problem backward from `t_end` to `t_start` for a
/// terminal condition given in raw coordinates.
pub fn solve_tvp(
    model: &LocalVolModel,
    terminal: &(dyn Fn(&[f64]) -> f64 + Sync),
    t_start: f64,
    t_end: f64,
    spec: &GridSpec,
) -> Result<GridSolution> {
    solve_tvp_with(model, terminal, t_start, t_end, spec, SolveOptions::default())
}

/// [`solve_tvp`] with explicit stepping options.
pub fn solve_tvp_with(
    model: &LocalVolModel,
    terminal: &(dyn Fn(&[f64]) -> f64 + Sync),
    t_start: f64,
    t_end: f64,
    spec: &GridSpec,
    options: SolveOptions,
) -> Result<GridSolution> {
    if t_start.is_nan() || t_end.is_nan() || t_start >= t_end {
        return Err(PathwiseError::Precondition(format!(
            "need t_start < t_end, got [{t_start}, {t_end}]"
        )));
    }
    if spec.dimension() != model.dimension() {
        return Err(PathwiseError::DimensionMismatch {
            expected: model.dimension(),
            got: spec.dimension(),
        });
    }
    let log_space = model.flavor() == Flavor::Positive;
    let op = NativeOperator::new(model);

    // sample the terminal condition at the grid nodes
    let mut term = vec![0.0f64; spec.flat_len()];
    match spec.dimension() {
        1 => {
            let a = spec.axes[0];
            for (k, tv) in term.iter_mut().enumerate() {
                let y = a.coord(k);
                let x = if log_space { y.exp() } else { y };
                *tv = terminal(&[x]);
            }
        }
        _ => {
            let (a1, a2) = (spec.axes[0], spec.axes[1]);
            for i in 0..a1.nodes {
                for j in 0..a2.nodes {
                    let y = [a1.coord(i), a2.coord(j)];
                    let x = if log_space { [y[0].exp(), y[1].exp()] } else { y };
                    term[i * a2.nodes + j] = terminal(&x);
                }
            }
        }
    }
    if term.iter().any(|v| !v.is_finite()) {
        return Err(PathwiseError::Validation("terminal data non-finite on grid".into()));
    }

    let horizon = t_end - t_start;
    let halfwidth = spec
        .axes
        .iter()
        .map(|a| 0.5 * (a.hi - a.lo))
        .fold(f64::INFINITY, f64::min);
    let margin = (EVAL_MARGIN_SIGMAS * (model.bound() * horizon).sqrt()).min(0.45 * halfwidth);

    let mut solution = GridSolution {
        axes: spec.axes.clone(),
        t_start,
        t_end,
        steps: spec.steps,
        values: vec![Vec::new(); spec.steps + 1],
        log_space,
        eval_margin: vec![margin; spec.dimension()],
    };
    solution.values[spec.steps] = term;

    match spec.dimension() {
        1 => step_backward_1d(&op, &mut solution, options.rannacher),
        _ => step_backward_2d(model, &op, &mut solution)?,
    }
    if solution.values.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(PathwiseError::Validation("solution contains non-finite values".into()));
    }
    Ok(solution)
}

/// One theta-scheme step of the 1d operator from the known slice at `t_known`
/// to the unknown slice at `t_unknown = t_known - dt`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn theta_step_1d(
    op: &dyn Coefficients1d,
    axis_lo: f64,
    h: f64,
    n: usize,
    known: &[f64],
    t_known: f64,
    t_unknown: f64,
    theta: f64,
    work: &mut Workspace1d,
) -> Vec<f64> {
    let dt = t_known - t_unknown;
    let y_of = |i: usize| axis_lo + h * i as f64;

    // rhs = (I + (1 - theta) dt L(t_known)) known
    let explicit = dt * (1.0 - theta);
    for i in 0..n {
        let y = y_of(i);
        let lv = if i == 0 {
            op.b(t_known, y) * (known[1] - known[0]) / h
        } else if i == n - 1 {
            op.b(t_known, y) * (known[n - 1] - known[n - 2]) / h
        } else {
            let a = op.a(t_known, y);
            let b = op.b(t_known, y);
            0.5 * a * (known[i - 1] - 2.0 * known[i] + known[i + 1]) / (h * h)
                + b * (known[i + 1] - known[i - 1]) / (2.0 * h)
        };
        work.rhs[i] = known[i] + explicit * lv;
    }

    // lhs = I - theta dt L(t_unknown)
    let implicit = dt * theta;
    for i in 0..n {
        let y = y_of(i);
        if i == 0 {
            let b = op.b(t_unknown, y);
            work.sub[0] = 0.0;
            work.diag[0] = 1.0 + implicit * b / h;
            work.sup[0] = -implicit * b / h;
        } else if i == n - 1 {
            let b = op.b(t_unknown, y);
            work.sub[n - 1] = implicit * b / h;
            work.diag[n - 1] = 1.0 - implicit * b / h;
            work.sup[n - 1] = 0.0;
        } else {
            let a = op.a(t_unknown, y);
            let b = op.b(t_unknown, y);
            let diff = 0.5 * a / (h * h);
            let adv = b / (2.0 * h);
            work.sub[i] = -implicit * (diff - adv);
            work.diag[i] = 1.0 + implicit * 2.0 * diff;
            work.sup[i] = -implicit * (diff + adv);
        }
    }
    tridiag::solve_in_place(&work.sub, &work.diag, &work.sup, &mut work.rhs, &mut work.scratch);
    work.rhs.clone()
}

pub(crate) struct Workspace1d {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl Workspace1d {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            sub: vec![0.0; n],
            diag: vec![0.0; n],
            sup: vec![0.0; n],
            rhs: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }
}

fn step_backward_1d(op: &NativeOperator, solution: &mut GridSolution, rannacher: bool) {
    let axis = solution.axes[0];
    let n = axis.nodes;
    let h = axis.step();
    let dt = solution.dt();
    let mut work = Workspace1d::new(n);

    for m in (0..solution.steps).rev() {
        let t_hi = solution.time_of(m + 1);
        let t_lo = solution.time_of(m);
        let known = solution.values[m + 1].clone();
        let next = if rannacher && m + 1 == solution.steps {
            // Rannacher start: two fully implicit half-steps
            let mid =
                theta_step_1d(op, axis.lo, h, n, &known, t_hi, t_hi - 0.5 * dt, 1.0, &mut work);
            theta_step_1d(op, axis.lo, h, n, &mid, t_hi - 0.5 * dt, t_lo, 1.0, &mut work)
        } else {
            theta_step_1d(op, axis.lo, h, n, &known, t_hi, t_lo, 0.5, &mut work)
        };
        solution.values[m] = next;
    }
}

/// Value with linear extrapolation beyond the grid edge (discrete second
/// derivative zero at the boundary).
fn ext2(vals: &[f64], n1: usize, n2: usize, i: isize, j: isize) -> f64 {
    if i < 0 {
        return 2.0 * ext2(vals, n1, n2, 0, j) - ext2(vals, n1, n2, 1, j);
    }
    if i >= n1 as isize {
        return 2.0 * ext2(vals, n1, n2, n1 as isize - 1, j) - ext2(vals, n1, n2, n1 as isize - 2, j);
    }
    if j < 0 {
        return 2.0 * ext2(vals, n1, n2, i, 0) - ext2(vals, n1, n2, i, 1);
    }
    if j >= n2 as isize {
        return 2.0 * ext2(vals, n1, n2, i, n2 as isize - 1) - ext2(vals, n1, n2, i, n2 as isize - 2);
    }
    vals[i as usize * n2 + j as usize]
}

fn step_backward_2d(
    model: &LocalVolModel,
    op: &NativeOperator,
    solution: &mut GridSolution,
) -> Result<()> {
    let (a1, a2) = (solution.axes[0], solution.axes[1]);
    let (n1, n2) = (a1.nodes, a2.nodes);
    let (h1, h2) = (a1.step(), a2.step());
    let dt = solution.dt();
    let bound = model.bound();
    let cfl = h1.min(h2).powi(2) / (2.0 * 2.0 * bound);
    if dt > cfl * (1.0 + 1e-12) {
        return Err(PathwiseError::CflViolation { dt, bound: cfl });
    }

    for m in (0..solution.steps).rev() {
        let t = solution.time_of(m + 1);
        let known = std::mem::take(&mut solution.values[m + 1]);
        let mut next = vec![0.0f64; n1 * n2];
        for i in 0..n1 {
            for j in 0..n2 {
                let y = [a1.coord(i), a2.coord(j)];
                let a = op.diffusion(t, &y);
                let b1 = op.drift(t, &y, 0);
                let b2 = op.drift(t, &y, 1);
                let (ii, jj) = (i as isize, j as isize);
                let g = |di: isize, dj: isize| ext2(&known, n1, n2, ii + di, jj + dj);
                let center = g(0, 0);
                let d11 = (g(-1, 0) - 2.0 * center + g(1, 0)) / (h1 * h1);
                let d22 = (g(0, -1) - 2.0 * center + g(0, 1)) / (h2 * h2);
                let d12 = (g(1, 1) - g(1, -1) - g(-1, 1) + g(-1, -1)) / (4.0 * h1 * h2);
                let g1 = (g(1, 0) - g(-1, 0)) / (2.0 * h1);
                let g2 = (g(0, 1) - g(0, -1)) / (2.0 * h2);
                let lv = 0.5 * (a.get(0, 0) * d11 + 2.0 * a.get(0, 1) * d12 + a.get(1, 1) * d22)
                    + b1 * g1
                    + b2 * g2;
                next[i * n2 + j] = center + dt * lv;
            }
        }
        solution.values[m + 1] = known;
        solution.values[m] = next;
    }
    Ok(())
}

/// Smallest number of time steps satisfying the 2d explicit CFL bound.
pub fn min_steps_2d(model: &LocalVolModel, spec: &GridSpec, horizon: f64) -> usize {
    let h = spec.axes.iter().map(|a| a.step()).fold(f64::INFINITY, f64::min);
    let cfl = h * h / (4.0 * model.bound());
    (horizon / cfl).ceil() as usize
}
