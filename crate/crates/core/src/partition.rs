//! Refining dyadic partitions of the trading horizon.
//!
//! All covariations and pathwise integrals in this crate are taken along one
//! fixed refining sequence of partitions of `[0, T]`. Level `n` holds the
//! `2^n + 1` dyadic nodes `k * T / 2^n`. Nesting is exact: node times are
//! always computed as `finest_index * (T / 2^max_level)`, so a node shared by
//! two levels has bit-identical time at both.

use crate::error::{PathwiseError, Result};

/// A refining sequence of uniform dyadic partitions of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionHierarchy {
    horizon: f64,
    max_level: u32,
}

impl PartitionHierarchy {
    /// Largest supported level; `2^24 + 1` nodes is the storage ceiling.
    pub const LEVEL_CEILING: u32 = 24;

    pub fn new(horizon: f64, max_level: u32) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(PathwiseError::Validation(format!(
                "horizon must be finite and positive, got {horizon}"
            )));
        }
        if max_level == 0 || max_level > Self::LEVEL_CEILING {
            return Err(PathwiseError::Validation(format!(
                "max_level must lie in 1..={}, got {max_level}",
                Self::LEVEL_CEILING
            )));
        }
        Ok(Self { horizon, max_level })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// Mesh of the level-`n` partition, `T / 2^n`.
    pub fn mesh(&self, level: u32) -> f64 {
        self.horizon / (1u64 << level) as f64
    }

    /// Number of nodes of the level-`n` partition (`2^n + 1`).
    pub fn nodes(&self, level: u32) -> usize {
        (1usize << level) + 1
    }

    pub fn check_level(&self, level: u32) -> Result<()> {
        if level > self.max_level {
            Err(PathwiseError::LevelExceeded {
                requested: level,
                max: self.max_level,
            })
        } else {
            Ok(())
        }
    }

    /// Finest-level index of node `k` of level `n`.
    #[inline]
    pub fn finest_index(&self, level: u32, k: usize) -> usize {
        k << (self.max_level - level)
    }

    /// Time of node `k` of the level-`n` partition.
    ///
    /// Computed through the finest-level index so that coinciding nodes of
    /// different levels carry bit-identical times.
    #[inline]
    pub fn time(&self, level: u32, k: usize) -> f64 {
        self.finest_index(level, k) as f64 * self.mesh(self.max_level)
    }

    /// All node times of the level-`n` partition.
    pub fn level_times(&self, level: u32) -> Vec<f64> {
        (0..self.nodes(level)).map(|k| self.time(level, k)).collect()
    }

    /// The successor `t'` of a node time `t` at level `n`: the next node of
    /// the level-`n` partition, with the convention `t' = T` when `t = T`.
    pub fn successor(&self, level: u32, t: f64) -> Result<f64> {
        let k = self.node_index(level, t)?;
        if k + 1 >= self.nodes(level) {
            Ok(self.horizon)
        } else {
            Ok(self.time(level, k + 1))
        }
    }

    /// Index of the level-`n` node matching `t` exactly, or an error when `t`
    /// is not a node of that level.
    pub fn node_index(&self, level: u32, t: f64) -> Result<usize> {
        self.check_level(level)?;
        let u = t / self.mesh(level);
        let k = u.round();
        if (u - k).abs() > 1e-9 || k < 0.0 || k as usize >= self.nodes(level) {
            return Err(PathwiseError::Validation(format!(
                "t = {t} is not a node of partition level {level}"
            )));
        }
        Ok(k as usize)
    }

    /// Whether `t` coincides with a node of the level-`n` partition.
    pub fn contains(&self, level: u32, t: f64) -> bool {
        self.node_index(level, t).is_ok()
    }
}
