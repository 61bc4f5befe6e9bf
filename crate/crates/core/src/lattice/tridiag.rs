//! Thomas algorithm for tridiagonal systems.

/// Solve a tridiagonal system in place using the Thomas algorithm.
///
/// * `sub` — sub-diagonal, `sub[0]` unused
/// * `diag` — main diagonal
/// * `sup` — super-diagonal, `sup[n-1]` unused
/// * `rhs` — right-hand side, overwritten with the solution
///
/// `scratch` must have the same length and is used for the modified
/// super-diagonal. Panics on a zero pivot (singular system).
pub fn solve_in_place(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    debug_assert!(n > 0);
    debug_assert_eq!(sub.len(), n);
    debug_assert_eq!(diag.len(), n);
    debug_assert_eq!(sup.len(), n);
    debug_assert_eq!(scratch.len(), n);

    scratch[0] = sup[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let den = diag[i] - sub[i] * scratch[i - 1];
        assert!(den != 0.0, "singular tridiagonal system at row {i}");
        scratch[i] = sup[i] / den;
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / den;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}
