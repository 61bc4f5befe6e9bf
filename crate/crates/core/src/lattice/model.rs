//! Local volatility models: the covariance field `a(t, x)`.
//!
//! A model prescribes the covariation density of admissible price
//! trajectories: `d<S_i,S_j> = a_ij dt` for the whole-space flavor, and
//! `d<S_i,S_j> = a_ij S_i S_j dt` for the positive flavor. The field must be
//! symmetric, bounded, and positive definite; these properties are validated
//! by sampling a probe grid since models are user-supplied functions.

use crate::error::{PathwiseError, Result};
use crate::path::Flavor;

/// Symmetric covariance matrix for dimensions 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovMatrix {
    dim: usize,
    m: [[f64; 2]; 2],
}

impl CovMatrix {
    pub fn new_1d(a: f64) -> Self {
        Self { dim: 1, m: [[a, 0.0], [0.0, 0.0]] }
    }

    pub fn new_2d(a11: f64, a12: f64, a22: f64) -> Self {
        Self { dim: 2, m: [[a11, a12], [a12, a22]] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn max_abs_entry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m = m.max(self.m[i][j].abs());
            }
        }
        m
    }

    /// Smallest eigenvalue (closed form for d <= 2).
    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim == 1 {
            self.m[0][0]
        } else {
            let half_tr = 0.5 * (self.m[0][0] + self.m[1][1]);
            let half_diff = 0.5 * (self.m[0][0] - self.m[1][1]);
            half_tr - (half_diff * half_diff + self.m[0][1] * self.m[0][1]).sqrt()
        }
    }

    /// Lower-triangular Cholesky factor.
    pub fn cholesky(&self, t: f64, x: &[f64]) -> Result<[[f64; 2]; 2]> {
        let fail = || PathwiseError::NotPositiveDefinite { t, x: x.to_vec() };
        let a11 = self.m[0][0];
        if a11 <= 0.0 {
            return Err(fail());
        }
        let l11 = a11.sqrt();
        if self.dim == 1 {
            return Ok([[l11, 0.0], [0.0, 0.0]]);
        }
        let l21 = self.m[0][1] / l11;
        let rem = self.m[1][1] - l21 * l21;
        if rem <= 0.0 {
            return Err(fail());
        }
        Ok([[l11, 0.0], [l21, rem.sqrt()]])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = *self;
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] *= factor;
            }
        }
        out
    }
}

/// A scalar field on a rectangular `(t, x)` grid with bilinear interpolation
/// and flat extrapolation outside the table.
#[derive(Debug, Clone)]
pub struct Surface2d {
    t_grid: Vec<f64>,
    x_grid: Vec<f64>,
    /// Row-major: `values[it * x_grid.len() + ix]`.
    values: Vec<f64>,
}

impl Surface2d {
    pub fn new(t_grid: Vec<f64>, x_grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if t_grid.is_empty() || x_grid.is_empty() {
            return Err(PathwiseError::Validation("surface grids must be non-empty".into()));
        }
        if values.len() != t_grid.len() * x_grid.len() {
            return Err(PathwiseError::DimensionMismatch {
                expected: t_grid.len() * x_grid.len(),
                got: values.len(),
            });
        }
        for g in [&t_grid, &x_grid] {
            if g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(PathwiseError::Validation("surface grid not strictly increasing".into()));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PathwiseError::Validation("surface contains non-finite value".into()));
        }
        Ok(Self { t_grid, x_grid, values })
    }

    pub fn constant(value: f64) -> Self {
        Self { t_grid: vec![0.0], x_grid: vec![0.0], values: vec![value] }
    }

    fn bracket(grid: &[f64], v: f64) -> (usize, f64) {
        if grid.len() == 1 || v <= grid[0] {
            return (0, 0.0);
        }
        let last = grid.len() - 1;
        if v >= grid[last] {
            return (last - 1, 1.0);
        }
        let i = grid.partition_point(|&g| g <= v) - 1;
        let w = (v - grid[i]) / (grid[i + 1] - grid[i]);
        (i, w)
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let nx = self.x_grid.len();
        let (it, wt) = Self::bracket(&self.t_grid, t);
        let (ix, wx) = Self::bracket(&self.x_grid, x);
        let at = |r: usize, c: usize| self.values[r * nx + c];
        if self.t_grid.len() == 1 && nx == 1 {
            return at(0, 0);
        }
        if self.t_grid.len() == 1 {
            return at(0, ix) * (1.0 - wx) + at(0, ix + 1) * wx;
        }
        if nx == 1 {
            return at(it, 0) * (1.0 - wt) + at(it + 1, 0) * wt;
        }
        let lo = at(it, ix) * (1.0 - wx) + at(it, ix + 1) * wx;
        let hi = at(it + 1, ix) * (1.0 - wx) + at(it + 1, ix + 1) * wx;
        lo * (1.0 - wt) + hi * wt
    }
}

/// Functional form of the covariance field.
#[derive(Debug, Clone)]
pub enum CovarianceFamily {
    /// Constant symmetric matrix.
    Constant(CovMatrix),
    /// `a_ij = rho^{1{i != j}} sigma_i(t, x_i) sigma_j(t, x_j)` with one
    /// constant correlation (d <= 2).
    Separable { sigmas: Vec<Surface2d>, rho: f64 },
    /// `a_11(t, x)` tabulated on a `(t, x)` grid, d = 1 only.
    Tabulated(Surface2d),
}

/// The covariance field together with its declared bound and eigenvalue
/// floor.
#[derive(Debug, Clone)]
pub struct LocalVolModel {
    dimension: usize,
    flavor: Flavor,
    family: CovarianceFamily,
    bound: f64,
    eigen_floor: f64,
}

impl LocalVolModel {
    pub fn new(
        dimension: usize,
        flavor: Flavor,
        family: CovarianceFamily,
        bound: f64,
        eigen_floor: f64,
    ) -> Result<Self> {
        if dimension == 0 || dimension > 2 {
            return Err(PathwiseError::Validation(format!(
                "model dimension must be 1 or 2, got {dimension}"
            )));
        }
        if !(bound.is_finite() && bound > 0.0) {
            return Err(PathwiseError::Validation("bound must be finite and positive".into()));
        }
        if !(eigen_floor.is_finite() && eigen_floor > 0.0) {
            return Err(PathwiseError::Validation(
                "eigen floor must be finite and strictly positive".into(),
            ));
        }
        match &family {
            CovarianceFamily::Constant(m) if m.dim() != dimension => {
                return Err(PathwiseError::DimensionMismatch { expected: dimension, got: m.dim() });
            }
            CovarianceFamily::Separable { sigmas, .. } if sigmas.len() != dimension => {
                return Err(PathwiseError::DimensionMismatch {
                    expected: dimension,
                    got: sigmas.len(),
                });
            }
            CovarianceFamily::Separable { rho, .. } if rho.abs() >= 1.0 => {
                return Err(PathwiseError::Validation(format!(
                    "correlation must lie in (-1, 1), got {rho}"
                )));
            }
            CovarianceFamily::Tabulated(_) if dimension != 1 => {
                return Err(PathwiseError::Validation(
                    "tabulated covariance supports dimension 1 only".into(),
                ));
            }
            _ => {}
        }
        Ok(Self { dimension, flavor, family, bound, eigen_floor })
    }

    /// Constant scalar model, dimension 1.
    pub fn constant_1d(flavor: Flavor, a: f64) -> Result<Self> {
        Self::new(
            1,
            flavor,
            CovarianceFamily::Constant(CovMatrix::new_1d(a)),
            a * 1.0001,
            (a * 1e-3).min(a),
        )
    }

    /// Constant 2x2 model with per-coordinate variances and correlation.
    pub fn constant_2d(flavor: Flavor, a11: f64, a22: f64, rho: f64) -> Result<Self> {
        let a12 = rho * (a11 * a22).sqrt();
        let m = CovMatrix::new_2d(a11, a12, a22);
        let floor = m.min_eigenvalue() * 0.5;
        Self::new(
            2,
            flavor,
            CovarianceFamily::Constant(m),
            m.max_abs_entry() * 1.0001,
            floor.max(1e-12),
        )
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn eigen_floor(&self) -> f64 {
        self.eigen_floor
    }

    pub fn family(&self) -> &CovarianceFamily {
        &self.family
    }

    /// The covariance matrix `a(t, x)`. `x` is in raw coordinates (strictly
    /// positive for the positive flavor).
    pub fn covariance(&self, t: f64, x: &[f64]) -> CovMatrix {
        debug_assert_eq!(x.len(), self.dimension);
        match &self.family {
            CovarianceFamily::Constant(m) => *m,
            CovarianceFamily::Separable { sigmas, rho } => {
                if self.dimension == 1 {
                    let s = sigmas[0].eval(t, x[0]);
                    CovMatrix::new_1d(s * s)
                } else {
                    let s1 = sigmas[0].eval(t, x[0]);
                    let s2 = sigmas[1].eval(t, x[1]);
                    CovMatrix::new_2d(s1 * s1, rho * s1 * s2, s2 * s2)
                }
            }
            CovarianceFamily::Tabulated(surface) => CovMatrix::new_1d(surface.eval(t, x[0])),
        }
    }

    /// Sample symmetry, the eigenvalue floor, and the entry bound on a probe
    /// grid of 101 points per axis over `[0, 1.1 * horizon] x domain`.
    ///
    /// `domain` gives per-coordinate raw-space bounds.
    pub fn validate(&self, horizon: f64, domain: &[(f64, f64)]) -> Result<ModelValidation> {
        if domain.len() != self.dimension {
            return Err(PathwiseError::DimensionMismatch {
                expected: self.dimension,
                got: domain.len(),
            });
        }
        const PROBE: usize = 101;
        let t_hi = 1.1 * horizon;
        let axis = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (PROBE - 1) as f64;
        let mut min_eig = f64::INFINITY;
        let mut max_entry = 0.0f64;
        let mut probe_at = |t: f64, x: &[f64]| -> Result<()> {
            let a = self.covariance(t, x);
            for i in 0..self.dimension {
                for j in 0..self.dimension {
                    if !a.get(i, j).is_finite() {
                        return Err(PathwiseError::Validation(format!(
                            "covariance non-finite at t = {t}, x = {x:?}"
                        )));
                    }
                    if (a.get(i, j) - a.get(j, i)).abs() > 0.0 {
                        return Err(PathwiseError::Validation(format!(
                            "covariance asymmetric at t = {t}, x = {x:?}"
                        )));
                    }
                }
            }
            min_eig = min_eig.min(a.min_eigenvalue());
            max_entry = max_entry.max(a.max_abs_entry());
            Ok(())
        };
        for kt in 0..PROBE {
            let t = axis(0.0, t_hi, kt);
            if self.dimension == 1 {
                for kx in 0..PROBE {
                    probe_at(t, &[axis(domain[0].0, domain[0].1, kx)])?;
                }
            } else {
                // coarser per-axis sweep in 2d to keep the probe cheap
                for kx in 0..PROBE {
                    for ky in [0usize, PROBE / 4, PROBE / 2, 3 * PROBE / 4, PROBE - 1] {
                        probe_at(
                            t,
                            &[axis(domain[0].0, domain[0].1, kx), axis(domain[1].0, domain[1].1, ky)],
                        )?;
                        probe_at(
                            t,
                            &[axis(domain[0].0, domain[0].1, ky), axis(domain[1].0, domain[1].1, kx)],
                        )?;
                    }
                }
            }
        }
        if min_eig < self.eigen_floor {
            return Err(PathwiseError::Validation(format!(
                "sampled minimum eigenvalue {min_eig:.6e} below floor {:.6e}",
                self.eigen_floor
            )));
        }
        if max_entry > self.bound {
            return Err(PathwiseError::Validation(format!(
                "sampled entry magnitude {max_entry:.6e} above declared bound {:.6e}",
                self.bound
            )));
        }
        Ok(ModelValidation { min_eigenvalue: min_eig, max_entry })
    }
}

/// Sampled extremes recorded during model validation.
#[derive(Debug, Clone, Copy)]
pub struct ModelValidation {
    pub min_eigenvalue: f64,
    pub max_entry: f64,
}

/// The whole-space coefficients obtained from a positive-flavor model by the
/// logarithmic substitution `x = exp(y)`: diffusion `a_ij(t, exp(y))` and
/// drift `-a_ii(t, exp(y)) / 2`.
#[derive(Debug, Clone)]
pub struct LogTransformed<'a> {
    model: &'a LocalVolModel,
}

/// Transform a positive-flavor problem to whole-space log coordinates.
pub fn log_transform(model: &LocalVolModel) -> Result<LogTransformed<'_>> {
    if model.flavor() != Flavor::Positive {
        return Err(PathwiseError::Precondition(
            "log transform applies to positive-flavor models only".into(),
        ));
    }
    Ok(LogTransformed { model })
}

impl<'a> LogTransformed<'a> {
    pub fn dimension(&self) -> usize {
        self.model.dimension()
    }

    /// Diffusion matrix in log coordinates at `(t, y)`.
    pub fn diffusion(&self, t: f64, y: &[f64]) -> CovMatrix {
        let x: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        self.model.covariance(t, &x)
    }

    /// Drift vector in log coordinates at `(t, y)`.
    pub fn drift(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let a = self.diffusion(t, y);
        (0..self.model.dimension()).map(|i| -0.5 * a.get(i, i)).collect()
    }

    /// Transform the terminal condition: `f_tilde(y) = f(exp(y))`.
    pub fn terminal<'f>(
        &self,
        f: &'f (dyn Fn(&[f64]) -> f64 + Sync),
    ) -> impl Fn(&[f64]) -> f64 + Sync + 'f {
        move |y: &[f64]| {
            let x: Vec<f64> = y.iter().map(|v| v.exp()).collect();
            f(&x)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_eigenvalue_2d() {
        let m = CovMatrix::new_2d(2.0, 0.5, 1.0);
        // eigenvalues of [[2, .5], [.5, 1]]: 1.5 +- sqrt(.25 + .25)
        let expect = 1.5 - 0.5f64.sqrt();
        assert!((m.min_eigenvalue() - expect).abs() < 1e-14);
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = CovMatrix::new_2d(0.04, 0.01, 0.09);
        let l = m.cholesky(0.0, &[1.0, 1.0]).unwrap();
        let a11 = l[0][0] * l[0][0];
        let a12 = l[1][0] * l[0][0];
        let a22 = l[1][0] * l[1][0] + l[1][1] * l[1][1];
        assert!((a11 - 0.04).abs() < 1e-15);
        assert!((a12 - 0.01).abs() < 1e-15);
        assert!((a22 - 0.09).abs() < 1e-15);
    }

    #[test]
    fn cholesky_rejects_degenerate() {
        let m = CovMatrix::new_2d(1.0, 1.0, 1.0);
        assert!(m.cholesky(0.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn surface_bilinear_interpolation() {
        let s = Surface2d::new(
            vec![0.0, 1.0],
            vec![0.0, 2.0],
            vec![1.0, 3.0, 2.0, 4.0],
        )
        .unwrap();
        assert!((s.eval(0.0, 0.0) - 1.0).abs() < 1e-15);
        assert!((s.eval(0.5, 1.0) - 2.5).abs() < 1e-15);
        // flat extrapolation
        assert!((s.eval(-1.0, -1.0) - 1.0).abs() < 1e-15);
        assert!((s.eval(5.0, 5.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_floor_violation() {
        // declared floor above the actual smallest eigenvalue
        let m = CovMatrix::new_1d(0.01);
        let model = LocalVolModel::new(
            1,
            Flavor::WholeSpace,
            CovarianceFamily::Constant(m),
            1.0,
            0.5,
        )
        .unwrap();
        assert!(model.validate(1.0, &[(-1.0, 1.0)]).is_err());
    }

    #[test]
    fn validation_passes_constant_model() {
        let model = LocalVolModel::constant_2d(Flavor::Positive, 0.04, 0.09, 0.5).unwrap();
        let report = model.validate(1.0, &[(50.0, 200.0), (50.0, 200.0)]).unwrap();
        assert!(report.min_eigenvalue >= model.eigen_floor());
        assert!(report.max_entry <= model.bound());
    }

    #[test]
    fn log_transform_constant_drift() {
        // a = sigma^2 constant gives drift -sigma^2 / 2 everywhere
        let model = LocalVolModel::constant_1d(Flavor::Positive, 0.04).unwrap();
        let lt = log_transform(&model).unwrap();
        for y in [-1.0, 0.0, 2.0] {
            assert!((lt.drift(0.3, &[y])[0] + 0.02).abs() < 1e-15);
        }
        let f = |x: &[f64]| x[0];
        let tf = lt.terminal(&f);
        assert!((tf(&[1.0]) - 1.0f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn log_transform_needs_positive_flavor() {
        let model = LocalVolModel::constant_1d(Flavor::WholeSpace, 1.0).unwrap();
        assert!(log_transform(&model).is_err());
    }

    #[test]
    fn tabulated_family_is_1d_only() {
        let s = Surface2d::constant(0.04);
        assert!(LocalVolModel::new(2, Flavor::Positive, CovarianceFamily::Tabulated(s), 1.0, 1e-6)
            .is_err());
    }
}
