//! Euler stepping of trajectories whose covariation matches a local
//! volatility model.
//!
//! Whole-space dynamics step the raw coordinates with increments
//! `chol(kappa a) sqrt(dt) z`; positive-flavor dynamics step the logarithm
//! with the drift `-kappa a_ii / 2` and exponentiate, which keeps every
//! coordinate strictly positive and makes the price coordinates driftless.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::lattice::model::LocalVolModel;
use crate::path::Flavor;

/// Walk `n_steps` Euler steps of size `dt` starting from `x0` at time `t0`.
/// Returns node-major raw values including the initial node:
/// `(n_steps + 1) * d` entries. `kappa` scales the covariance field.
pub(crate) fn euler_chain(
    model: &LocalVolModel,
    kappa: f64,
    t0: f64,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let d = model.dimension();
    debug_assert_eq!(x0.len(), d);
    let positive = model.flavor() == Flavor::Positive;
    let sqrt_dt = dt.sqrt();

    let mut out = Vec::with_capacity((n_steps + 1) * d);
    out.extend_from_slice(x0);

    // state carried in native coordinates
    let mut state: Vec<f64> = if positive { x0.iter().map(|v| v.ln()).collect() } else { x0.to_vec() };
    let mut raw = x0.to_vec();

    for k in 0..n_steps {
        let t = t0 + dt * k as f64;
        let a = model.covariance(t, &raw).scaled(kappa);
        let l = a.cholesky(t, &raw)?;
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = if d == 2 { rng.sample(StandardNormal) } else { 0.0 };
        for i in 0..d {
            let noise = if i == 0 {
                l[0][0] * z0
            } else {
                l[1][0] * z0 + l[1][1] * z1
            };
            if positive {
                state[i] += -0.5 * a.get(i, i) * dt + sqrt_dt * noise;
                raw[i] = state[i].exp();
            } else {
                state[i] += sqrt_dt * noise;
                raw[i] = state[i];
            }
        }
        out.extend_from_slice(&raw);
    }
    Ok(out)
}
