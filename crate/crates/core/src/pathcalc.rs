//! Pathwise quadratic covariation and Föllmer (left-endpoint Riemann sum)
//! integration along the fixed dyadic partition sequence.
//!
//! At a fixed level `n`, the covariation curve at node `t` accumulates the
//! increment products of all partition intervals contained in `[0, t]`. With
//! this convention the discrete quadratic identity
//!
//! ```text
//! sum_{s' <= t} 2 (S_i(s) - K) (S_i(s') - S_i(s))
//!     = (S_i(t) - K)^2 - (S_i(0) - K)^2 - sum_{s' <= t} (S_i(s') - S_i(s))^2
//! ```
//!
//! is exact arithmetic at every node, not a limit statement. Convergence in
//! the level is reported as a Cauchy increment against the next-coarser
//! level, since the limit object is unavailable for arbitrary paths.

use crate::error::{PathwiseError, Result};
use crate::lattice::grid::GridSolution;
use crate::lattice::model::LocalVolModel;
use crate::lattice::solver::NativeOperator;
use crate::path::SampledPath;

/// Pairwise covariation curves of a path at one partition level.
#[derive(Debug, Clone)]
pub struct CovariationCurve {
    level: u32,
    dimension: usize,
    times: Vec<f64>,
    /// Upper-triangle storage: `curves[pair_index(i, j)][node]`.
    curves: Vec<Vec<f64>>,
    /// `max_t |curve_n(t) - curve_{n-1}(t)|` over nodes shared with the
    /// next-coarser level, per pair. Zero for level 0.
    cauchy_increment: Vec<f64>,
}

#[inline]
fn pair_index(dimension: usize, i: usize, j: usize) -> usize {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    // row-major upper triangle of a d x d symmetric matrix
    lo * dimension - lo * (lo + 1) / 2 + hi
}

impl CovariationCurve {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// The curve `t -> <S_i, S_j>(t)` on the level's nodes. Symmetric in
    /// `(i, j)` by storage.
    pub fn curve(&self, i: usize, j: usize) -> Result<&[f64]> {
        self.check_pair(i, j)?;
        Ok(&self.curves[pair_index(self.dimension, i, j)])
    }

    /// Terminal covariation `<S_i, S_j>(T)`.
    pub fn terminal(&self, i: usize, j: usize) -> Result<f64> {
        Ok(*self.curve(i, j)?.last().unwrap())
    }

    /// Across-level Cauchy diagnostic for the pair `(i, j)`.
    pub fn cauchy_increment(&self, i: usize, j: usize) -> Result<f64> {
        self.check_pair(i, j)?;
        Ok(self.cauchy_increment[pair_index(self.dimension, i, j)])
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        let d = self.dimension;
        if i >= d || j >= d {
            return Err(PathwiseError::IndexOutOfRange { index: i.max(j), limit: d });
        }
        Ok(())
    }
}

/// Accumulate the level-`n` covariation curves of a path, together with the
/// Cauchy increment against level `n - 1`.
pub fn covariation(path: &SampledPath, level: u32) -> Result<CovariationCurve> {
    path.hierarchy().check_level(level)?;
    let d = path.dimension();
    let pairs = d * (d + 1) / 2;
    let curves = covariation_sums(path, level);
    let cauchy_increment = if level == 0 {
        vec![0.0; pairs]
    } else {
        let coarse = covariation_sums(path, level - 1);
        let mut inc = vec![0.0f64; pairs];
        for (p, inc_p) in inc.iter_mut().enumerate() {
            for (k, &c) in coarse[p].iter().enumerate() {
                // node k of level n-1 is node 2k of level n
                *inc_p = inc_p.max((curves[p][2 * k] - c).abs());
            }
        }
        inc
    };
    Ok(CovariationCurve {
        level,
        dimension: d,
        times: path.hierarchy().level_times(level),
        curves,
        cauchy_increment,
    })
}

fn covariation_sums(path: &SampledPath, level: u32) -> Vec<Vec<f64>> {
    let d = path.dimension();
    let pairs = d * (d + 1) / 2;
    let nodes = path.hierarchy().nodes(level);
    let mut curves = vec![vec![0.0f64; nodes]; pairs];
    let mut acc = vec![0.0f64; pairs];
    #[allow(clippy::needless_range_loop)]
    for k in 1..nodes {
        let a = path.node_at_level(level, k - 1);
        let b = path.node_at_level(level, k);
        let mut p = 0;
        for i in 0..d {
            let di = b[i] - a[i];
            for j in i..d {
                acc[p] += di * (b[j] - a[j]);
                curves[p][k] = acc[p];
                p += 1;
            }
        }
    }
    curves
}

/// A value curve produced by Föllmer integration at one level.
#[derive(Debug, Clone)]
pub struct IntegralCurve {
    pub level: u32,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `max_t |I_n(t) - I_{n-1}(t)|` over shared nodes, with the integrand
    /// restricted to the coarser level's left endpoints.
    pub cauchy_increment: f64,
}

impl IntegralCurve {
    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// A non-anticipative integrand evaluated at left endpoints of partition
/// intervals: the holding vector as a function of time and current spot.
pub trait Integrand {
    fn eval(&self, t: f64, spot: &[f64], out: &mut [f64]);
}

impl<F> Integrand for F
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn eval(&self, t: f64, spot: &[f64], out: &mut [f64]) {
        self(t, spot, out)
    }
}

/// The quadratic trading strategy with strike matrix entry `K_ij`: holds
/// `2 (S_i + S_j - K)` in coordinates `i` and `j` when `i != j`, and
/// `2 (S_i - K)` in coordinate `i` when `i = j`. Its Riemann sums telescope
/// into squared increments, which ties integral existence to covariation
/// existence.
#[derive(Debug, Clone, Copy)]
pub struct BasicStrategy {
    i: usize,
    j: usize,
    strike: f64,
    dimension: usize,
}

/// Build the quadratic strategy for coordinates `i, j` (zero-based) and
/// strike `K_ij`.
pub fn basic_strategy(dimension: usize, i: usize, j: usize, strike: f64) -> Result<BasicStrategy> {
    if i >= dimension || j >= dimension {
        return Err(PathwiseError::IndexOutOfRange { index: i.max(j), limit: dimension });
    }
    Ok(BasicStrategy { i, j, strike, dimension })
}

impl Integrand for BasicStrategy {
    fn eval(&self, _t: f64, spot: &[f64], out: &mut [f64]) {
        debug_assert_eq!(spot.len(), self.dimension);
        out.fill(0.0);
        if self.i == self.j {
            out[self.i] = 2.0 * (spot[self.i] - self.strike);
        } else {
            let v = 2.0 * (spot[self.i] + spot[self.j] - self.strike);
            out[self.i] = v;
            out[self.j] = v;
        }
    }
}

/// Left-endpoint Riemann sums of `integrand . dS` along level `n`, with the
/// across-level Cauchy diagnostic.
pub fn follmer_integral(
    integrand: &dyn Integrand,
    path: &SampledPath,
    level: u32,
) -> Result<IntegralCurve> {
    path.hierarchy().check_level(level)?;
    let values = follmer_sums(integrand, path, level);
    let cauchy_increment = if level == 0 {
        0.0
    } else {
        let coarse = follmer_sums(integrand, path, level - 1);
        coarse
            .iter()
            .enumerate()
            .map(|(k, &c)| (values[2 * k] - c).abs())
            .fold(0.0f64, f64::max)
    };
    Ok(IntegralCurve {
        level,
        times: path.hierarchy().level_times(level),
        values,
        cauchy_increment,
    })
}

fn follmer_sums(integrand: &dyn Integrand, path: &SampledPath, level: u32) -> Vec<f64> {
    let d = path.dimension();
    let nodes = path.hierarchy().nodes(level);
    let mut values = vec![0.0f64; nodes];
    let mut xi = vec![0.0f64; d];
    let mut acc = 0.0f64;
    #[allow(clippy::needless_range_loop)]
    for k in 1..nodes {
        let s = path.node_at_level(level, k - 1);
        let s_next = path.node_at_level(level, k);
        let t = path.hierarchy().time(level, k - 1);
        integrand.eval(t, s, &mut xi);
        let mut dot = 0.0;
        for i in 0..d {
            dot += xi[i] * (s_next[i] - s[i]);
        }
        acc += dot;
        values[k] = acc;
    }
    values
}

/// Worst-case residual of the exact discrete quadratic identity for the
/// diagonal strategy `(i, i)` over all nodes of level `n`, normalized by the
/// magnitude of the participating terms.
pub fn ito_identity_residual(path: &SampledPath, level: u32, i: usize, strike: f64) -> Result<f64> {
    let strategy = basic_strategy(path.dimension(), i, i, strike)?;
    let integral = follmer_integral(&strategy, path, level)?;
    let cov = covariation(path, level)?;
    let qv = cov.curve(i, i)?;
    let s0 = path.node_at_level(level, 0)[i];
    let mut worst = 0.0f64;
    for (k, &value) in integral.values.iter().enumerate() {
        let st = path.node_at_level(level, k)[i];
        let rhs = (st - strike).powi(2) - (s0 - strike).powi(2) - qv[k];
        let scale = (st - strike)
            .powi(2)
            .abs()
            .max((s0 - strike).powi(2).abs())
            .max(qv[k].abs())
            .max(1.0);
        worst = worst.max((value - rhs).abs() / scale);
    }
    Ok(worst)
}

/// Cross-coordinate version of the discrete identity: the `(i, j)` strategy
/// integral against `(S_i + S_j - K)^2` increments and the polarized
/// covariation sum `sum_{k,l in {i,j}} <S_k, S_l>`.
pub fn ito_identity_residual_cross(
    path: &SampledPath,
    level: u32,
    i: usize,
    j: usize,
    strike: f64,
) -> Result<f64> {
    if i == j {
        return ito_identity_residual(path, level, i, strike);
    }
    let strategy = basic_strategy(path.dimension(), i, j, strike)?;
    let integral = follmer_integral(&strategy, path, level)?;
    let cov = covariation(path, level)?;
    let (cii, cjj, cij) = (cov.curve(i, i)?, cov.curve(j, j)?, cov.curve(i, j)?);
    let p0 = {
        let s = path.node_at_level(level, 0);
        s[i] + s[j] - strike
    };
    let mut worst = 0.0f64;
    for (k, &value) in integral.values.iter().enumerate() {
        let s = path.node_at_level(level, k);
        let pt = s[i] + s[j] - strike;
        let bracket = cii[k] + 2.0 * cij[k] + cjj[k];
        let rhs = pt * pt - p0 * p0 - bracket;
        let scale = (pt * pt).abs().max((p0 * p0).abs()).max(bracket.abs()).max(1.0);
        worst = worst.max((value - rhs).abs() / scale);
    }
    Ok(worst)
}

/// The three correction terms of the pathwise change-of-variables formula
/// along a path at one level, and the size of its residual.
#[derive(Debug, Clone)]
pub struct ItoResidualReport {
    /// `max_t |v(t, S(t)) - v(0, S(0)) - int grad v . dS - int (dv/dt + L v) ds|`.
    pub max_residual: f64,
    /// Largest magnitude of the generator term `dv/dt + L v` seen along the
    /// path; near zero when `v` solves the terminal-value problem.
    pub max_generator_term: f64,
    pub level: u32,
}

/// Evaluate the pathwise change-of-variables residual of a value surface
/// along a sampled path at level `n`. The gradient integral is a
/// left-endpoint Riemann sum against path increments; the generator integral
/// is a left-endpoint sum in time.
pub fn pathwise_ito_residual(
    solution: &GridSolution,
    model: &LocalVolModel,
    path: &SampledPath,
    level: u32,
) -> Result<ItoResidualReport> {
    path.hierarchy().check_level(level)?;
    if path.dimension() != solution.dimension() {
        return Err(PathwiseError::DimensionMismatch {
            expected: solution.dimension(),
            got: path.dimension(),
        });
    }
    let op = NativeOperator::new(model);
    let hierarchy = path.hierarchy();
    let nodes = hierarchy.nodes(level);
    let t_start = solution.t_start();
    let t_end = solution.t_end();
    let d = path.dimension();

    // collect the level nodes lying inside the solve window
    let mut idx: Vec<usize> = (0..nodes)
        .filter(|&k| {
            let t = hierarchy.time(level, k);
            t >= t_start - 1e-12 && t <= t_end + 1e-12
        })
        .collect();
    if idx.len() < 2 {
        return Err(PathwiseError::Precondition(
            "path window contains fewer than two partition nodes".into(),
        ));
    }
    idx.sort_unstable();

    let native = |k: usize| -> Result<Vec<f64>> {
        let x = path.node_at_level(level, k);
        solution.to_native(x)
    };

    let k0 = idx[0];
    let y0 = native(k0)?;
    let t0 = hierarchy.time(level, k0);
    let v0 = solution.value_native(t0.max(t_start), &y0);

    let mut follmer = 0.0f64;
    let mut generator = 0.0f64;
    let mut max_residual = 0.0f64;
    let mut max_generator_term = 0.0f64;

    for w in idx.windows(2) {
        let (k, k_next) = (w[0], w[1]);
        let t = hierarchy.time(level, k).clamp(t_start, t_end);
        let x = path.node_at_level(level, k);
        let y = solution.to_native(x)?;
        for (i, axis) in solution.axes().iter().enumerate() {
            if y[i] < axis.lo || y[i] > axis.hi {
                return Err(PathwiseError::OutsideGrid { t, x: x.to_vec() });
            }
        }

        // gradient in raw coordinates times the raw increment
        let mut grad = solution.gradient_native(t, &y);
        if solution.log_space() {
            for (g, &xi) in grad.iter_mut().zip(x) {
                *g /= xi;
            }
        }
        let x_next = path.node_at_level(level, k_next);
        for i in 0..d {
            follmer += grad[i] * (x_next[i] - x[i]);
        }

        // generator term in native coordinates
        let vt = solution.time_derivative_native(t, &y);
        let second = solution.second_derivatives_native(t, &y);
        let a = op.diffusion(t, &y);
        let mut lv = 0.0;
        for i in 0..d {
            for j in 0..d {
                lv += 0.5 * a.get(i, j) * second[i * d + j];
            }
            lv += op.drift(t, &y, i) * grad_native_component(&grad, x, i, solution.log_space());
        }
        let gen_term = vt + lv;
        max_generator_term = max_generator_term.max(gen_term.abs());
        let dt_inc = hierarchy.time(level, k_next).clamp(t_start, t_end) - t;
        generator += gen_term * dt_inc;

        let t_next = hierarchy.time(level, k_next).clamp(t_start, t_end);
        let y_next = solution.to_native(x_next)?;
        let v_next = solution.value_native(t_next, &y_next);
        let residual = v_next - v0 - follmer - generator;
        max_residual = max_residual.max(residual.abs());
    }
    Ok(ItoResidualReport { max_residual, max_generator_term, level })
}

/// Undo the raw-coordinate chain rule to recover the native gradient entry.
#[inline]
fn grad_native_component(grad_raw: &[f64], x: &[f64], i: usize, log_space: bool) -> f64 {
    if log_space {
        grad_raw[i] * x[i]
    } else {
        grad_raw[i]
    }
}
