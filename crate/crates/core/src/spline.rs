//! Natural cubic spline interpolation on a uniform grid.
//!
//! The spline is C^2, which matters downstream: second differences taken
//! with bumps much smaller than the grid spacing recover the spline's
//! curvature instead of interpolation noise.

use crate::lattice::tridiag;

/// Natural cubic spline through `values` at the uniform nodes
/// `lo + k * step`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    lo: f64,
    step: f64,
    values: Vec<f64>,
    /// Second derivatives at the nodes (natural end conditions).
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn fit(lo: f64, step: f64, values: &[f64]) -> Self {
        let n = values.len();
        assert!(n >= 2, "spline needs at least two nodes");
        let mut second = vec![0.0f64; n];
        if n > 2 {
            let m = n - 2;
            let sub = vec![1.0; m];
            let diag = vec![4.0; m];
            let sup = vec![1.0; m];
            let mut rhs = vec![0.0; m];
            let h2 = step * step;
            for i in 0..m {
                rhs[i] = 6.0 * (values[i] - 2.0 * values[i + 1] + values[i + 2]) / h2;
            }
            let mut scratch = vec![0.0; m];
            tridiag::solve_in_place(&sub, &diag, &sup, &mut rhs, &mut scratch);
            second[1..=m].copy_from_slice(&rhs);
        }
        Self { lo, step, values: values.to_vec(), second }
    }

    #[inline]
    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.values.len();
        let u = (x - self.lo) / self.step;
        let i = (u.floor() as isize).clamp(0, n as isize - 2) as usize;
        (i, x - (self.lo + i as f64 * self.step))
    }

    /// Evaluate the spline; linear extrapolation outside the node range.
    pub fn eval(&self, x: f64) -> f64 {
        let (i, dx) = self.locate(x);
        let h = self.step;
        let a = self.values[i];
        let m0 = self.second[i];
        let m1 = self.second[i + 1];
        let b = (self.values[i + 1] - self.values[i]) / h - h * (2.0 * m0 + m1) / 6.0;
        if x < self.lo {
            return a + b * (x - self.lo);
        }
        let top = self.lo + (self.values.len() - 1) as f64 * self.step;
        if x > top {
            let j = self.values.len() - 2;
            let mj = self.second[j];
            let mj1 = self.second[j + 1];
            let slope_end =
                (self.values[j + 1] - self.values[j]) / h + h * (2.0 * mj1 + mj) / 6.0;
            return self.values[self.values.len() - 1] + slope_end * (x - top);
        }
        a + b * dx + 0.5 * m0 * dx * dx + (m1 - m0) / (6.0 * h) * dx * dx * dx
    }

    /// First derivative of the spline.
    pub fn derivative(&self, x: f64) -> f64 {
        let (i, dx) = self.locate(x);
        let h = self.step;
        let m0 = self.second[i];
        let m1 = self.second[i + 1];
        let b = (self.values[i + 1] - self.values[i]) / h - h * (2.0 * m0 + m1) / 6.0;
        let dx = dx.clamp(0.0, h);
        b + m0 * dx + 0.5 * (m1 - m0) / h * dx * dx
    }
}
