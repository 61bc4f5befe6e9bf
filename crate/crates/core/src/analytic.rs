//! Closed-form references, independent of any grid or path machinery.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    standard_normal().pdf(x)
}

/// Zero-rate Black-Scholes call price for spot `s`, strike `k`, volatility
/// `sigma`, time to expiry `tau`.
pub fn black_scholes_call(s: f64, k: f64, sigma: f64, tau: f64) -> f64 {
    if tau <= 0.0 || sigma <= 0.0 {
        return (s - k).max(0.0);
    }
    let sd = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    s * normal_cdf(d1) - k * normal_cdf(d2)
}

/// Zero-rate Black-Scholes call Delta, `N(d1)`.
pub fn black_scholes_delta(s: f64, k: f64, sigma: f64, tau: f64) -> f64 {
    if tau <= 0.0 || sigma <= 0.0 {
        return if s > k { 1.0 } else { 0.0 };
    }
    let sd = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + 0.5 * sd * sd) / sd;
    normal_cdf(d1)
}

/// Solution of the backward problem `dv/dt + a v_xx / 2 = 0` with `a = 2`
/// and terminal data `x^2` at time `t_end`: `v(t, x) = x^2 + 2 (t_end - t)`.
pub fn heat_quadratic(t: f64, x: f64, t_end: f64) -> f64 {
    x * x + 2.0 * (t_end - t)
}

/// Expected terminal running maximum of a driftless geometric Brownian
/// motion: `E[max(m, max_{[0,tau]} S)]` for current spot `x`, current
/// running maximum `m >= x`, volatility `sigma`.
///
/// Derived by reflection for Brownian motion with drift `-sigma^2/2`:
/// with `d1 = (ln(x/m) + sigma^2 tau / 2) / (sigma sqrt(tau))` and
/// `d2 = d1 - sigma sqrt(tau)`,
///
/// ```text
/// u = m (1 - Phi(d2)) + x Phi(d1) + x sigma sqrt(tau) (d1 Phi(d1) + phi(d1))
/// ```
pub fn lookback_running_max_value(x: f64, m: f64, sigma: f64, tau: f64) -> f64 {
    assert!(x > 0.0 && m >= x * (1.0 - 1e-12), "need 0 < x <= m");
    if tau <= 0.0 || sigma <= 0.0 {
        return m;
    }
    let s = sigma * tau.sqrt();
    let d1 = ((x / m).ln() + 0.5 * s * s) / s;
    let d2 = d1 - s;
    m * (1.0 - normal_cdf(d2))
        + x * normal_cdf(d1)
        + x * s * (d1 * normal_cdf(d1) + normal_pdf(d1))
}
