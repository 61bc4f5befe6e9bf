//! Regeneration checks for the frozen Monte-Carlo fixtures in
//! `tests/fixtures/`. The `regenerate_*` tests are ignored by default; run
//! them with `--ignored --nocapture` to print fresh fixture values after a
//! deliberate oracle change.

mod common;

use common::asian_two_fixing_call_oracle;

/// Frozen oracle for the two-fixing average-price call:
/// spot 100, strike 100, sigma 0.2, fixings at 0.5 and 1.0, 10^6 paths,
/// seed 2024. Values produced by `asian_two_fixing_call_oracle` and recorded
/// in `tests/fixtures/asian_mc_oracle.json`.
pub const ASIAN_TWO_FIXING_VALUE: f64 = 6.3057586665627;
pub const ASIAN_TWO_FIXING_SE: f64 = 0.010189479799623;

#[test]
#[ignore = "regenerates the committed fixture; slow"]
fn regenerate_asian_two_fixing_fixture() {
    let est = asian_two_fixing_call_oracle(100.0, 100.0, 0.2, 0.5, 1.0, 1_000_000, 2024);
    println!(
        "asian_two_fixing_call: value = {:.13}, se = {:.15}, paths = {}",
        est.value, est.standard_error, est.paths
    );
    assert!((est.value - ASIAN_TWO_FIXING_VALUE).abs() < 1e-9);
    assert!((est.standard_error - ASIAN_TWO_FIXING_SE).abs() < 1e-9);
}
