//! Solver-level verification: discrete maximum principle, positivity
//! propagation, martingale property, growth envelopes, and interior residual
//! recomputation.

use rand::Rng;

use crate::error::{PathwiseError, Result};
use crate::lattice::grid::{GridSolution, GridSpec};
use crate::lattice::model::LocalVolModel;
use crate::lattice::solver::{solve_tvp, NativeOperator};
use crate::sde::euler_chain;

/// Outcome of a maximum-principle check.
#[derive(Debug, Clone)]
pub struct MaxPrincipleReport {
    pub min_value: f64,
    pub epsilon: f64,
    pub pass: bool,
    /// Whether the terminal condition was strictly positive somewhere in the
    /// grid interior, making the positivity-propagation check applicable.
    pub positivity_applicable: bool,
    /// All strictly interior nodes of the start slice are positive.
    pub positivity_pass: bool,
    pub steps_used: usize,
}

/// Number of time steps that keeps the 1d Crank-Nicolson update a positive
/// operator (`dt <= h^2 / max a`, a factor-2 cushion under the exact bound to
/// absorb the drift terms).
pub fn monotone_steps_1d(model: &LocalVolModel, spec: &GridSpec, horizon: f64) -> usize {
    let h = spec.axes[0].step();
    let dt_max = h * h / model.bound();
    (horizon / dt_max).ceil() as usize
}

/// Solve with a nonnegative terminal condition and verify that the solution
/// stays above `-1e-8 ||f||_inf` everywhere, plus the strict positivity of
/// the start slice when the terminal data is positive somewhere inside the
/// grid.
///
/// The step count is raised to the monotone regime of the scheme if the
/// requested one is coarser; the report records the count actually used.
pub fn maximum_principle_check(
    model: &LocalVolModel,
    terminal: &(dyn Fn(&[f64]) -> f64 + Sync),
    t_start: f64,
    t_end: f64,
    spec: &GridSpec,
) -> Result<MaxPrincipleReport> {
    let mut spec = spec.clone();
    if spec.dimension() == 1 {
        spec.steps = spec.steps.max(monotone_steps_1d(model, &spec, t_end - t_start));
    }
    let solution = solve_tvp(model, terminal, t_start, t_end, &spec)?;

    let mut f_inf = 0.0f64;
    let mut interior_positive = false;
    {
        let term = solution.terminal_slice();
        for (flat, &v) in term.iter().enumerate() {
            if v < 0.0 {
                return Err(PathwiseError::Precondition(format!(
                    "terminal condition negative ({v}) at node {flat}"
                )));
            }
            f_inf = f_inf.max(v.abs());
            if v > 0.0 && is_interior(&solution, flat) {
                interior_positive = true;
            }
        }
    }
    let epsilon = 1e-8 * f_inf;
    let mut min_value = f64::INFINITY;
    for m in 0..=solution.steps() {
        for &v in solution.slice(m) {
            min_value = min_value.min(v);
        }
    }
    let mut positivity_pass = true;
    if interior_positive {
        for (flat, &v) in solution.start_slice().iter().enumerate() {
            if is_interior(&solution, flat) && v <= 0.0 {
                positivity_pass = false;
                break;
            }
        }
    }
    Ok(MaxPrincipleReport {
        min_value,
        epsilon,
        pass: min_value >= -epsilon,
        positivity_applicable: interior_positive,
        positivity_pass,
        steps_used: spec.steps,
    })
}

fn is_interior(solution: &GridSolution, flat: usize) -> bool {
    match solution.dimension() {
        1 => flat > 0 && flat + 1 < solution.axes()[0].nodes,
        _ => {
            let n2 = solution.axes()[1].nodes;
            let (i, j) = (flat / n2, flat % n2);
            i > 0 && i + 1 < solution.axes()[0].nodes && j > 0 && j + 1 < n2
        }
    }
}

/// Outcome of a Monte-Carlo martingale check.
#[derive(Debug, Clone)]
pub struct MartingaleReport {
    pub difference: f64,
    pub standard_error: f64,
    pub grid_tolerance: f64,
    pub pass: bool,
    pub paths_clamped: usize,
}

/// Estimate `E[v(t1, S(t1)) | S(t0) = x0] - v(t0, x0)` by simulating paths of
/// the model and evaluating the solved surface, passing when the difference
/// sits within three standard errors plus a grid tolerance.
#[allow(clippy::too_many_arguments)]
pub fn martingale_check(
    model: &LocalVolModel,
    solution: &GridSolution,
    n_paths: usize,
    t0: f64,
    t1: f64,
    x0: &[f64],
    seed: u64,
    grid_tolerance: f64,
) -> Result<MartingaleReport> {
    if n_paths < 100 {
        return Err(PathwiseError::Precondition(format!(
            "martingale check needs at least 100 paths, got {n_paths}"
        )));
    }
    if !(solution.t_start() <= t0 && t0 < t1 && t1 <= solution.t_end() + 1e-12) {
        return Err(PathwiseError::Precondition(format!(
            "need t_start <= t0 < t1 <= t_end, got [{t0}, {t1}]"
        )));
    }
    let steps = 512usize;
    let dt = (t1 - t0) / steps as f64;
    let base = solution.value(t0, x0)?;

    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut clamped_paths = 0usize;
    for p in 0..n_paths {
        let mut rng = crate::rng::path_rng(seed, p as u64);
        let chain = euler_chain(model, 1.0, t0, x0, dt, steps, &mut rng)?;
        let d = model.dimension();
        let last = &chain[steps * d..];
        let (v, clamped) = solution.value_clamped(t1, last)?;
        if clamped {
            clamped_paths += 1;
        }
        sum += v;
        sum_sq += v * v;
    }
    let n = n_paths as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    let se = (var / n).sqrt();
    let difference = mean - base;
    Ok(MartingaleReport {
        difference,
        standard_error: se,
        grid_tolerance,
        pass: difference.abs() <= 3.0 * se + grid_tolerance,
        paths_clamped: clamped_paths,
    })
}

/// Smallest constant `c` with `|v| <= c (1 + |x|^p)` over the whole grid
/// (raw coordinates).
pub fn growth_envelope(solution: &GridSolution, p: f64) -> f64 {
    let mut c = 0.0f64;
    let d = solution.dimension();
    for m in 0..=solution.steps() {
        let vals = solution.slice(m);
        match d {
            1 => {
                let axis = solution.axes()[0];
                for (k, &v) in vals.iter().enumerate() {
                    let x = solution.to_raw(&[axis.coord(k)]);
                    c = c.max(v.abs() / (1.0 + x[0].abs().powf(p)));
                }
            }
            _ => {
                let (a1, a2) = (solution.axes()[0], solution.axes()[1]);
                for i in 0..a1.nodes {
                    for j in 0..a2.nodes {
                        let x = solution.to_raw(&[a1.coord(i), a2.coord(j)]);
                        let norm = (x[0] * x[0] + x[1] * x[1]).sqrt();
                        c = c.max(vals[i * a2.nodes + j].abs() / (1.0 + norm.powf(p)));
                    }
                }
            }
        }
    }
    c
}

/// Recompute the PDE residual `dv/dt + L v` of a solved surface with central
/// differences independent of the stepping scheme: time-central across
/// slices, space-central at nodes inside the evaluation margin.
///
/// `skip_start` / `skip_end` drop slices adjacent to the initial and
/// terminal times (the terminal neighborhood of a kinked payoff has no
/// pointwise residual of truncation size).
pub fn pde_residual(
    solution: &GridSolution,
    model: &LocalVolModel,
    skip_start: usize,
    skip_end: usize,
) -> f64 {
    let op = NativeOperator::new(model);
    let dt = solution.dt();
    let mut worst = 0.0f64;
    let lo_m = 1 + skip_start;
    let hi_m = solution.steps().saturating_sub(1 + skip_end);
    for m in lo_m..=hi_m {
        let t = solution.time_of(m);
        match solution.dimension() {
            1 => {
                let axis = solution.axes()[0];
                let h = axis.step();
                let margin_nodes = (solution.eval_margin[0] / h).ceil() as usize;
                let vals = solution.slice(m);
                let prev = solution.slice(m - 1);
                let next = solution.slice(m + 1);
                for k in margin_nodes.max(1)..(axis.nodes - 1).saturating_sub(margin_nodes) {
                    let y = [axis.coord(k)];
                    let a = op.diffusion(t, &y).get(0, 0);
                    let b = op.drift(t, &y, 0);
                    let vt = (next[k] - prev[k]) / (2.0 * dt);
                    let vxx = (vals[k - 1] - 2.0 * vals[k] + vals[k + 1]) / (h * h);
                    let vx = (vals[k + 1] - vals[k - 1]) / (2.0 * h);
                    worst = worst.max((vt + 0.5 * a * vxx + b * vx).abs());
                }
            }
            _ => {
                let (a1, a2) = (solution.axes()[0], solution.axes()[1]);
                let (h1, h2) = (a1.step(), a2.step());
                let m1 = ((solution.eval_margin[0] / h1).ceil() as usize).max(1);
                let m2 = ((solution.eval_margin[1] / h2).ceil() as usize).max(1);
                let n2 = a2.nodes;
                let vals = solution.slice(m);
                let prev = solution.slice(m - 1);
                let next = solution.slice(m + 1);
                for i in m1..(a1.nodes - 1).saturating_sub(m1) {
                    for j in m2..(n2 - 1).saturating_sub(m2) {
                        let y = [a1.coord(i), a2.coord(j)];
                        let a = op.diffusion(t, &y);
                        let c = i * n2 + j;
                        let vt = (next[c] - prev[c]) / (2.0 * dt);
                        let d11 = (vals[c - n2] - 2.0 * vals[c] + vals[c + n2]) / (h1 * h1);
                        let d22 = (vals[c - 1] - 2.0 * vals[c] + vals[c + 1]) / (h2 * h2);
                        let d12 = (vals[c + n2 + 1] - vals[c + n2 - 1] - vals[c - n2 + 1]
                            + vals[c - n2 - 1])
                            / (4.0 * h1 * h2);
                        let g1 = (vals[c + n2] - vals[c - n2]) / (2.0 * h1);
                        let g2 = (vals[c + 1] - vals[c - 1]) / (2.0 * h2);
                        let res = vt
                            + 0.5
                                * (a.get(0, 0) * d11
                                    + 2.0 * a.get(0, 1) * d12
                                    + a.get(1, 1) * d22)
                            + op.drift(t, &y, 0) * g1
                            + op.drift(t, &y, 1) * g2;
                        worst = worst.max(res.abs());
                    }
                }
            }
        }
    }
    worst
}

/// Draw a random nonnegative terminal function: a mixture of clipped hat
/// bumps with random centers, widths, and heights. Used by the randomized
/// maximum-principle sweeps.
pub fn random_nonnegative_terminal(
    lo: f64,
    hi: f64,
    rng: &mut impl Rng,
) -> impl Fn(&[f64]) -> f64 + Sync {
    let n_bumps = rng.gen_range(1..=5);
    let mut bumps = Vec::with_capacity(n_bumps);
    for _ in 0..n_bumps {
        let center = rng.gen_range(lo..hi);
        let width = rng.gen_range(0.02 * (hi - lo)..0.5 * (hi - lo));
        let height = rng.gen_range(0.1..10.0f64);
        bumps.push((center, width, height));
    }
    move |x: &[f64]| {
        bumps
            .iter()
            .map(|&(c, w, h)| h * (1.0 - ((x[0] - c) / w).abs()).max(0.0))
            .sum()
    }
}
