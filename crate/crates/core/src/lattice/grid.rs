//! Space-time grids and solved value surfaces.
//!
//! A [`GridSolution`] stores the backward solution `v(t_m, x)` of one
//! terminal-value solve on a uniform space grid (1d or tensor 2d) and a
//! uniform time grid. Positive-flavor problems are solved in log coordinates;
//! the grid then lives in log space and all public queries taking raw spot
//! coordinates apply the change of variables internally.

use std::fmt::Write as _;

use crate::error::{PathwiseError, Result};
use crate::lattice::model::LocalVolModel;
use crate::path::Flavor;

/// One uniform spatial axis in native (possibly log) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(PathwiseError::Validation(format!("bad axis bounds [{lo}, {hi}]")));
        }
        if nodes < 3 {
            return Err(PathwiseError::Validation("axis needs at least 3 nodes".into()));
        }
        Ok(Self { lo, hi, nodes })
    }

    #[inline]
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes - 1) as f64
    }

    #[inline]
    pub fn coord(&self, k: usize) -> f64 {
        self.lo + self.step() * k as f64
    }
}

/// Requested space-time resolution for one terminal-value solve. Axes are in
/// native coordinates: log space for positive-flavor models.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    pub steps: usize,
}

impl GridSpec {
    pub fn new_1d(lo: f64, hi: f64, nodes: usize, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(PathwiseError::Validation("need at least one time step".into()));
        }
        Ok(Self { axes: vec![Axis::new(lo, hi, nodes)?], steps })
    }

    pub fn new_2d(axis1: Axis, axis2: Axis, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(PathwiseError::Validation("need at least one time step".into()));
        }
        Ok(Self { axes: vec![axis1, axis2], steps })
    }

    /// Build a grid spanning `span_sigmas` diffusion standard deviations
    /// around a raw-space center. The center and width are mapped to log
    /// space for positive-flavor models, where one diffusion standard
    /// deviation over the horizon is `sqrt(bound * horizon)` in native units.
    pub fn centered(
        model: &LocalVolModel,
        center: &[f64],
        horizon: f64,
        span_sigmas: f64,
        nodes: usize,
        steps: usize,
    ) -> Result<Self> {
        if center.len() != model.dimension() {
            return Err(PathwiseError::DimensionMismatch {
                expected: model.dimension(),
                got: center.len(),
            });
        }
        let width = span_sigmas * (model.bound() * horizon).sqrt();
        let mut axes = Vec::with_capacity(center.len());
        for &c in center {
            let mid = match model.flavor() {
                Flavor::WholeSpace => c,
                Flavor::Positive => {
                    if c <= 0.0 {
                        return Err(PathwiseError::Validation(
                            "positive-flavor center must be positive".into(),
                        ));
                    }
                    c.ln()
                }
            };
            axes.push(Axis::new(mid - width, mid + width, nodes)?);
        }
        if steps == 0 {
            return Err(PathwiseError::Validation("need at least one time step".into()));
        }
        Ok(Self { axes, steps })
    }

    pub fn dimension(&self) -> usize {
        self.axes.len()
    }

    pub fn flat_len(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }
}

/// A solved value surface `v(t_m, x)` with its native grid.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub(crate) axes: Vec<Axis>,
    pub(crate) t_start: f64,
    pub(crate) t_end: f64,
    pub(crate) steps: usize,
    /// `values[m]` is the slice at `t_m = t_start + m * dt`; the last slice
    /// is the terminal condition, stored exactly as sampled.
    pub(crate) values: Vec<Vec<f64>>,
    pub(crate) log_space: bool,
    /// Per-axis evaluation margin in native units. Queries within
    /// `[lo + margin, hi - margin]` are considered inside the region the
    /// grid was designed to serve.
    pub(crate) eval_margin: Vec<f64>,
}

impl GridSolution {
    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dimension(&self) -> usize {
        self.axes.len()
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.steps as f64
    }

    pub fn log_space(&self) -> bool {
        self.log_space
    }

    pub fn time_of(&self, m: usize) -> f64 {
        self.t_start + self.dt() * m as f64
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        &self.values[m]
    }

    /// Terminal slice (the supplied terminal condition at the grid nodes).
    pub fn terminal_slice(&self) -> &[f64] {
        self.values.last().unwrap()
    }

    /// First slice (the solution at `t_start`).
    pub fn start_slice(&self) -> &[f64] {
        &self.values[0]
    }

    #[inline]
    pub(crate) fn flat(&self, idx: &[usize]) -> usize {
        match self.axes.len() {
            1 => idx[0],
            _ => idx[0] * self.axes[1].nodes + idx[1],
        }
    }

    /// Map a raw-space point to native grid coordinates.
    pub fn to_native(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dimension() {
            return Err(PathwiseError::DimensionMismatch {
                expected: self.dimension(),
                got: x.len(),
            });
        }
        if self.log_space {
            let mut out = Vec::with_capacity(x.len());
            for &v in x {
                if v <= 0.0 {
                    return Err(PathwiseError::Validation(format!(
                        "positive-flavor query with non-positive coordinate {v}"
                    )));
                }
                out.push(v.ln());
            }
            Ok(out)
        } else {
            Ok(x.to_vec())
        }
    }

    /// Map a native grid point to raw coordinates.
    pub fn to_raw(&self, y: &[f64]) -> Vec<f64> {
        if self.log_space {
            y.iter().map(|v| v.exp()).collect()
        } else {
            y.to_vec()
        }
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let span = (self.t_end - self.t_start).max(1e-300);
        if t < self.t_start - 1e-9 * span || t > self.t_end + 1e-9 * span {
            return Err(PathwiseError::OutsideGrid { t, x: vec![] });
        }
        Ok(t.clamp(self.t_start, self.t_end))
    }

    fn check_native(&self, t: f64, y: &[f64], margin: bool) -> Result<()> {
        for (i, axis) in self.axes.iter().enumerate() {
            let m = if margin { self.eval_margin[i] } else { 0.0 };
            if y[i] < axis.lo + m - 1e-12 || y[i] > axis.hi - m + 1e-12 {
                return Err(PathwiseError::OutsideGrid { t, x: self.to_raw(y) });
            }
        }
        Ok(())
    }

    /// Whether the raw point sits inside the designed evaluation region.
    pub fn in_eval_region(&self, t: f64, x: &[f64]) -> bool {
        match self.to_native(x) {
            Ok(y) => self.check_time(t).is_ok() && self.check_native(t, &y, true).is_ok(),
            Err(_) => false,
        }
    }

    /// Clamp a native point into the full grid range; returns whether any
    /// clamping occurred.
    pub fn clamp_full(&self, y: &mut [f64]) -> bool {
        let mut clamped = false;
        for (i, axis) in self.axes.iter().enumerate() {
            if y[i] < axis.lo {
                y[i] = axis.lo;
                clamped = true;
            } else if y[i] > axis.hi {
                y[i] = axis.hi;
                clamped = true;
            }
        }
        clamped
    }

    /// Clamp a native point into the evaluation region; returns whether any
    /// clamping occurred.
    pub(crate) fn clamp_native(&self, y: &mut [f64]) -> bool {
        let mut clamped = false;
        for (i, axis) in self.axes.iter().enumerate() {
            let lo = axis.lo + self.eval_margin[i];
            let hi = axis.hi - self.eval_margin[i];
            if y[i] < lo {
                y[i] = lo;
                clamped = true;
            } else if y[i] > hi {
                y[i] = hi;
                clamped = true;
            }
        }
        clamped
    }

    #[inline]
    fn axis_bracket(axis: &Axis, y: f64) -> (usize, f64) {
        let u = (y - axis.lo) / axis.step();
        let i = (u.floor() as isize).clamp(0, axis.nodes as isize - 2) as usize;
        (i, (u - i as f64).clamp(0.0, 1.0))
    }

    fn time_bracket(&self, t: f64) -> (usize, f64) {
        let u = (t - self.t_start) / self.dt();
        let m = (u.floor() as isize).clamp(0, self.steps as isize - 1) as usize;
        (m, (u - m as f64).clamp(0.0, 1.0))
    }

    fn slice_value_native(&self, m: usize, y: &[f64]) -> f64 {
        let vals = &self.values[m];
        match self.axes.len() {
            1 => {
                let (i, w) = Self::axis_bracket(&self.axes[0], y[0]);
                vals[i] * (1.0 - w) + vals[i + 1] * w
            }
            _ => {
                let (i, wi) = Self::axis_bracket(&self.axes[0], y[0]);
                let (j, wj) = Self::axis_bracket(&self.axes[1], y[1]);
                let n2 = self.axes[1].nodes;
                let v00 = vals[i * n2 + j];
                let v01 = vals[i * n2 + j + 1];
                let v10 = vals[(i + 1) * n2 + j];
                let v11 = vals[(i + 1) * n2 + j + 1];
                (v00 * (1.0 - wj) + v01 * wj) * (1.0 - wi) + (v10 * (1.0 - wj) + v11 * wj) * wi
            }
        }
    }

    /// Value at `(t, x)` with raw spot coordinates: linear interpolation in
    /// time, multilinear in space.
    pub fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        let t = self.check_time(t)?;
        let y = self.to_native(x)?;
        self.check_native(t, &y, false)?;
        Ok(self.value_native(t, &y))
    }

    pub(crate) fn value_native(&self, t: f64, y: &[f64]) -> f64 {
        let (m, wt) = self.time_bracket(t);
        let lo = self.slice_value_native(m, y);
        if wt == 0.0 {
            return lo;
        }
        let hi = self.slice_value_native(m + 1, y);
        lo * (1.0 - wt) + hi * wt
    }

    /// Central-difference gradient of one time slice at a native point,
    /// interpolated multilinearly between node gradients.
    fn slice_gradient_native(&self, m: usize, y: &[f64]) -> Vec<f64> {
        let d = self.axes.len();
        let vals = &self.values[m];
        // gradient of axis `axis` at node index `idx`
        let node_grad = |axis: usize, idx: &[usize]| -> f64 {
            let a = &self.axes[axis];
            let k = idx[axis];
            let mut lo_idx = idx.to_vec();
            let mut hi_idx = idx.to_vec();
            if k == 0 {
                hi_idx[axis] = 1;
                (vals[self.flat(&hi_idx)] - vals[self.flat(idx)]) / a.step()
            } else if k == a.nodes - 1 {
                lo_idx[axis] = k - 1;
                (vals[self.flat(idx)] - vals[self.flat(&lo_idx)]) / a.step()
            } else {
                lo_idx[axis] = k - 1;
                hi_idx[axis] = k + 1;
                (vals[self.flat(&hi_idx)] - vals[self.flat(&lo_idx)]) / (2.0 * a.step())
            }
        };
        match d {
            1 => {
                let (i, w) = Self::axis_bracket(&self.axes[0], y[0]);
                let g0 = node_grad(0, &[i]);
                let g1 = node_grad(0, &[i + 1]);
                vec![g0 * (1.0 - w) + g1 * w]
            }
            _ => {
                let (i, wi) = Self::axis_bracket(&self.axes[0], y[0]);
                let (j, wj) = Self::axis_bracket(&self.axes[1], y[1]);
                let blend = |axis: usize| {
                    let g00 = node_grad(axis, &[i, j]);
                    let g01 = node_grad(axis, &[i, j + 1]);
                    let g10 = node_grad(axis, &[i + 1, j]);
                    let g11 = node_grad(axis, &[i + 1, j + 1]);
                    (g00 * (1.0 - wj) + g01 * wj) * (1.0 - wi)
                        + (g10 * (1.0 - wj) + g11 * wj) * wi
                };
                vec![blend(0), blend(1)]
            }
        }
    }

    pub(crate) fn gradient_native(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let (m, wt) = self.time_bracket(t);
        let mut g = self.slice_gradient_native(m, y);
        if wt > 0.0 {
            let g1 = self.slice_gradient_native(m + 1, y);
            for (a, b) in g.iter_mut().zip(g1) {
                *a = *a * (1.0 - wt) + b * wt;
            }
        }
        g
    }

    /// Raw-space gradient at `(t, x)`: central differences on the native
    /// grid, chain-rule corrected for log grids, errors outside the interior
    /// evaluation margin.
    pub fn gradient(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let t = self.check_time(t)?;
        let y = self.to_native(x)?;
        self.check_native(t, &y, true)?;
        let mut g = self.gradient_native(t, &y);
        if self.log_space {
            for (gi, &xi) in g.iter_mut().zip(x) {
                *gi /= xi;
            }
        }
        Ok(g)
    }

    /// Like [`Self::gradient`] but clamping the query into the evaluation
    /// region instead of failing; the flag reports whether clamping happened.
    pub fn gradient_clamped(&self, t: f64, x: &[f64]) -> Result<(Vec<f64>, bool)> {
        let t = self.check_time(t)?;
        let mut y = self.to_native(x)?;
        let clamped = self.clamp_native(&mut y);
        let mut g = self.gradient_native(t, &y);
        if self.log_space {
            let raw = self.to_raw(&y);
            for (gi, &xi) in g.iter_mut().zip(&raw) {
                *gi /= xi;
            }
        }
        Ok((g, clamped))
    }

    /// Clamped value query; the flag reports whether clamping happened.
    pub fn value_clamped(&self, t: f64, x: &[f64]) -> Result<(f64, bool)> {
        let t = self.check_time(t)?;
        let mut y = self.to_native(x)?;
        let clamped = self.clamp_native(&mut y);
        Ok((self.value_native(t, &y), clamped))
    }

    /// Native-coordinate discrete time derivative at `(t, y)` from the
    /// bracketing pair of slices.
    pub(crate) fn time_derivative_native(&self, t: f64, y: &[f64]) -> f64 {
        let (m, _) = self.time_bracket(t);
        let lo = self.slice_value_native(m, y);
        let hi = self.slice_value_native(m + 1, y);
        (hi - lo) / self.dt()
    }

    /// Native second derivatives (d x d, cross term included for 2d) at a
    /// native point, from node central stencils interpolated multilinearly.
    pub(crate) fn second_derivatives_native(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let (m, wt) = self.time_bracket(t);
        let mut out = self.slice_second_native(m, y);
        if wt > 0.0 {
            let next = self.slice_second_native(m + 1, y);
            for (a, b) in out.iter_mut().zip(next) {
                *a = *a * (1.0 - wt) + b * wt;
            }
        }
        out
    }

    fn slice_second_native(&self, m: usize, y: &[f64]) -> Vec<f64> {
        let vals = &self.values[m];
        match self.axes.len() {
            1 => {
                let a = &self.axes[0];
                let h2 = a.step() * a.step();
                let (i, w) = Self::axis_bracket(a, y[0]);
                let sd = |k: usize| -> f64 {
                    let k = k.clamp(1, a.nodes - 2);
                    (vals[k - 1] - 2.0 * vals[k] + vals[k + 1]) / h2
                };
                vec![sd(i) * (1.0 - w) + sd(i + 1) * w]
            }
            _ => {
                let (a1, a2) = (&self.axes[0], &self.axes[1]);
                let (n2, h1, h2) = (a2.nodes, a1.step(), a2.step());
                let (i, wi) = Self::axis_bracket(a1, y[0]);
                let (j, wj) = Self::axis_bracket(a2, y[1]);
                let v = |r: usize, c: usize| vals[r * n2 + c];
                let d11 = |r: usize, c: usize| -> f64 {
                    let r = r.clamp(1, a1.nodes - 2);
                    (v(r - 1, c) - 2.0 * v(r, c) + v(r + 1, c)) / (h1 * h1)
                };
                let d22 = |r: usize, c: usize| -> f64 {
                    let c = c.clamp(1, n2 - 2);
                    (v(r, c - 1) - 2.0 * v(r, c) + v(r, c + 1)) / (h2 * h2)
                };
                let d12 = |r: usize, c: usize| -> f64 {
                    let r = r.clamp(1, a1.nodes - 2);
                    let c = c.clamp(1, n2 - 2);
                    (v(r + 1, c + 1) - v(r + 1, c - 1) - v(r - 1, c + 1) + v(r - 1, c - 1))
                        / (4.0 * h1 * h2)
                };
                let blend = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
                    (f(i, j) * (1.0 - wj) + f(i, j + 1) * wj) * (1.0 - wi)
                        + (f(i + 1, j) * (1.0 - wj) + f(i + 1, j + 1) * wj) * wi
                };
                let s11 = blend(&d11);
                let s22 = blend(&d22);
                let s12 = blend(&d12);
                vec![s11, s12, s12, s22]
            }
        }
    }

    /// Export as CSV with header `t,x1[,x2],v` in raw coordinates.
    pub fn to_csv(&self) -> String {
        let d = self.dimension();
        let mut out = String::from("t");
        for i in 1..=d {
            let _ = write!(out, ",x{i}");
        }
        out.push_str(",v\n");
        for m in 0..=self.steps {
            let t = self.time_of(m);
            match d {
                1 => {
                    for k in 0..self.axes[0].nodes {
                        let x = self.to_raw(&[self.axes[0].coord(k)]);
                        let _ = writeln!(out, "{t},{},{}", x[0], self.values[m][k]);
                    }
                }
                _ => {
                    let n2 = self.axes[1].nodes;
                    for i in 0..self.axes[0].nodes {
                        for j in 0..n2 {
                            let x = self.to_raw(&[self.axes[0].coord(i), self.axes[1].coord(j)]);
                            let _ =
                                writeln!(out, "{t},{},{},{}", x[0], x[1], self.values[m][i * n2 + j]);
                        }
                    }
                }
            }
        }
        out
    }
}
