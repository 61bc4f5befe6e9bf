//! Shared test support: independent Monte-Carlo oracles.
//!
//! Every oracle here samples exact distributions (no lattice, no scheme) so
//! that it stays independent of the implementation paths it is used to
//! check.

use pathwise_core::rng::path_rng;
use rand::Rng;
use rand_distr::StandardNormal;

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub paths: u64,
}

/// Average-price call on two fixings of a driftless geometric Brownian
/// motion: payoff `(0.5 (S(t1) + S(t2)) - strike)^+`, exact log-normal
/// sampling of the two increments.
#[allow(dead_code)]
pub fn asian_two_fixing_call_oracle(
    spot: f64,
    strike: f64,
    sigma: f64,
    t1: f64,
    t2: f64,
    n_paths: u64,
    seed: u64,
) -> McEstimate {
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for p in 0..n_paths {
        let mut rng = path_rng(seed, p);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let s1 = spot * (-0.5 * sigma * sigma * t1 + sigma * t1.sqrt() * z1).exp();
        let dt = t2 - t1;
        let s2 = s1 * (-0.5 * sigma * sigma * dt + sigma * dt.sqrt() * z2).exp();
        let pay = (0.5 * (s1 + s2) - strike).max(0.0);
        sum += pay;
        sum_sq += pay * pay;
    }
    let n = n_paths as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    McEstimate { value: mean, standard_error: (var / n).sqrt(), paths: n_paths }
}

/// Continuously averaged Asian call on a driftless geometric Brownian
/// motion, sampled at `steps` Euler points per path (exact GBM increments,
/// left-endpoint average).
#[allow(dead_code)]
pub fn asian_continuous_call_oracle(
    spot: f64,
    strike: f64,
    sigma: f64,
    horizon: f64,
    steps: usize,
    n_paths: u64,
    seed: u64,
) -> McEstimate {
    let dt = horizon / steps as f64;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for p in 0..n_paths {
        let mut rng = path_rng(seed, p);
        let mut s = spot;
        let mut integral = 0.0f64;
        for _ in 0..steps {
            integral += s * dt;
            let z: f64 = rng.sample(StandardNormal);
            s *= (-0.5 * sigma * sigma * dt + sigma * dt.sqrt() * z).exp();
        }
        let pay = (integral / horizon - strike).max(0.0);
        sum += pay;
        sum_sq += pay * pay;
    }
    let n = n_paths as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    McEstimate { value: mean, standard_error: (var / n).sqrt(), paths: n_paths }
}
