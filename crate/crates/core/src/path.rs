//! Sampled price trajectories.
//!
//! A [`SampledPath`] stores a d-dimensional trajectory at every node of the
//! finest partition level and interpolates linearly in between. Whole-space
//! trajectories may take any real values; positive-flavor trajectories are
//! strictly positive in every coordinate.

use std::fmt::Write as _;

use crate::error::{PathwiseError, Result};
use crate::partition::PartitionHierarchy;

/// Domain flavor of a trajectory or model: values in all of `R^d`, or in the
/// strictly positive orthant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    WholeSpace,
    Positive,
}

/// A d-dimensional trajectory sampled on the finest dyadic grid.
#[derive(Debug, Clone)]
pub struct SampledPath {
    hierarchy: PartitionHierarchy,
    dimension: usize,
    flavor: Flavor,
    /// Node-major storage: `values[node * dimension + coord]`.
    values: Vec<f64>,
}

impl SampledPath {
    pub fn new(
        hierarchy: PartitionHierarchy,
        dimension: usize,
        flavor: Flavor,
        values: Vec<f64>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(PathwiseError::Validation("dimension must be >= 1".into()));
        }
        let nodes = hierarchy.nodes(hierarchy.max_level());
        if values.len() != nodes * dimension {
            return Err(PathwiseError::DimensionMismatch {
                expected: nodes * dimension,
                got: values.len(),
            });
        }
        for &v in &values {
            if !v.is_finite() {
                return Err(PathwiseError::Validation("path contains non-finite value".into()));
            }
            if flavor == Flavor::Positive && v <= 0.0 {
                return Err(PathwiseError::Validation(format!(
                    "positive-flavor path contains non-positive value {v}"
                )));
            }
        }
        Ok(Self { hierarchy, dimension, flavor, values })
    }

    /// Constant path at `x0`.
    pub fn constant(hierarchy: PartitionHierarchy, flavor: Flavor, x0: &[f64]) -> Result<Self> {
        let nodes = hierarchy.nodes(hierarchy.max_level());
        let mut values = Vec::with_capacity(nodes * x0.len());
        for _ in 0..nodes {
            values.extend_from_slice(x0);
        }
        Self::new(hierarchy, x0.len(), flavor, values)
    }

    /// Build a path from a closure giving the value at each finest node time.
    pub fn from_fn(
        hierarchy: PartitionHierarchy,
        dimension: usize,
        flavor: Flavor,
        mut f: impl FnMut(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let level = hierarchy.max_level();
        let mut values = Vec::with_capacity(hierarchy.nodes(level) * dimension);
        for k in 0..hierarchy.nodes(level) {
            let v = f(hierarchy.time(level, k));
            values.extend_from_slice(&v);
        }
        Self::new(hierarchy, dimension, flavor, values)
    }

    pub fn hierarchy(&self) -> &PartitionHierarchy {
        &self.hierarchy
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    /// Value at finest-level node `k`.
    #[inline]
    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.dimension..(k + 1) * self.dimension]
    }

    /// Value at node `k` of partition level `n` (an exact stored read).
    #[inline]
    pub fn node_at_level(&self, level: u32, k: usize) -> &[f64] {
        self.node(self.hierarchy.finest_index(level, k))
    }

    /// Evaluate the path at an arbitrary time, returning the stored value
    /// exactly at grid nodes and interpolating linearly in between.
    pub fn value_at(&self, t: f64) -> Result<Vec<f64>> {
        let max = self.hierarchy.max_level();
        if t < -1e-12 || t > self.hierarchy.horizon() * (1.0 + 1e-12) {
            return Err(PathwiseError::Validation(format!("time {t} outside [0, T]")));
        }
        let u = t / self.hierarchy.mesh(max);
        let k = u.round();
        if (u - k).abs() < 1e-9 {
            let k = (k as usize).min(self.hierarchy.nodes(max) - 1);
            return Ok(self.node(k).to_vec());
        }
        let lo = u.floor() as usize;
        let w = u - lo as f64;
        let a = self.node(lo);
        let b = self.node(lo + 1);
        Ok((0..self.dimension).map(|i| a[i] + w * (b[i] - a[i])).collect())
    }

    /// Serialize to CSV with header `t,S1,...,Sd`, one row per finest node.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push('t');
        for i in 1..=self.dimension {
            let _ = write!(out, ",S{i}");
        }
        out.push('\n');
        let level = self.hierarchy.max_level();
        for k in 0..self.hierarchy.nodes(level) {
            let _ = write!(out, "{}", self.hierarchy.time(level, k));
            for &v in self.node(k) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Parse the CSV format written by [`Self::to_csv`]. The row count must
    /// be `2^L + 1` for some level `L`, and the time column must match the
    /// dyadic grid of `[0, T]` with `T` taken from the final row.
    pub fn from_csv(text: &str, flavor: Flavor) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| PathwiseError::Validation("empty path CSV".into()))?;
        let dimension = header.split(',').count().saturating_sub(1);
        if dimension == 0 {
            return Err(PathwiseError::Validation("path CSV header needs t,S1,...".into()));
        }
        let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
        for line in lines {
            let mut fields = line.split(',');
            let t: f64 = fields
                .next()
                .unwrap()
                .trim()
                .parse()
                .map_err(|e| PathwiseError::Validation(format!("bad time field: {e}")))?;
            let vals: std::result::Result<Vec<f64>, _> =
                fields.map(|f| f.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| PathwiseError::Validation(format!("bad value field: {e}")))?;
            if vals.len() != dimension {
                return Err(PathwiseError::DimensionMismatch {
                    expected: dimension,
                    got: vals.len(),
                });
            }
            rows.push((t, vals));
        }
        let n = rows.len();
        if n < 3 || (n - 1) & (n - 2) != 0 {
            return Err(PathwiseError::Validation(format!(
                "path CSV must have 2^L + 1 rows, got {n}"
            )));
        }
        let level = (n - 1).trailing_zeros();
        let horizon = rows.last().unwrap().0;
        let hierarchy = PartitionHierarchy::new(horizon, level)?;
        for (k, (t, _)) in rows.iter().enumerate() {
            if (t - hierarchy.time(level, k)).abs() > 1e-9 * horizon.max(1.0) {
                return Err(PathwiseError::Validation(format!(
                    "row {k} time {t} does not sit on the dyadic grid"
                )));
            }
        }
        let mut values = Vec::with_capacity(n * dimension);
        for (_, v) in rows {
            values.extend_from_slice(&v);
        }
        Self::new(hierarchy, dimension, flavor, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_path() -> SampledPath {
        let h = PartitionHierarchy::new(1.0, 6).unwrap();
        SampledPath::from_fn(h, 1, Flavor::WholeSpace, |t| vec![2.0 * t - 0.5]).unwrap()
    }

    #[test]
    fn node_reads_are_exact() {
        let p = linear_path();
        let h = *p.hierarchy();
        for level in 1..=6 {
            for k in 0..h.nodes(level) {
                let v = p.value_at(h.time(level, k)).unwrap();
                assert_eq!(v[0].to_bits(), p.node_at_level(level, k)[0].to_bits());
            }
        }
    }

    #[test]
    fn interpolates_between_nodes() {
        let p = linear_path();
        let v = p.value_at(0.51234).unwrap();
        assert!((v[0] - (2.0 * 0.51234 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn positive_flavor_rejects_nonpositive() {
        let h = PartitionHierarchy::new(1.0, 2).unwrap();
        let err = SampledPath::from_fn(h, 1, Flavor::Positive, |t| vec![t - 0.5]);
        assert!(err.is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = linear_path();
        let csv = p.to_csv();
        let q = SampledPath::from_csv(&csv, Flavor::WholeSpace).unwrap();
        assert_eq!(p.dimension(), q.dimension());
        assert_eq!(p.hierarchy().max_level(), q.hierarchy().max_level());
        for k in 0..p.hierarchy().nodes(6) {
            assert_eq!(p.node(k)[0].to_bits(), q.node(k)[0].to_bits());
        }
    }
}
