//! Shared numeric kernels: adaptive quadrature, golden-section search, and
//! small statistics helpers used across the library.

pub mod golden;
pub mod quad;

/// Least-squares slope of `y` on `x`.
///
/// Used to fit `log(bound)` against `log(n)` when estimating convergence
/// rates. Panics in debug builds if fewer than two points are supplied.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    debug_assert!(x.len() == y.len() && x.len() >= 2);
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    sxy / sxx
}

/// `log(sum_i w_i * e^{a_i})` without overflow, for nonnegative weights.
///
/// Returns `-inf` when every weight is zero and `+inf` if any `a_i` is
/// `+inf` with positive weight.
pub fn log_sum_exp_weighted(terms: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for (w, a) in terms.clone() {
        if w > 0.0 && a > m {
            m = a;
        }
    }
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut s = 0.0;
    for (w, a) in terms {
        if w > 0.0 {
            s += w * (a - m).exp();
        }
    }
    m + s.ln()
}

/// `x * ln(1/x)` extended continuously by 0 at `x = 0` and `x = 1`.
///
/// This is the entropy-like factor in the ESI-Markov remainder; its maximum
/// over [0, 1] is `1/e`, attained at `x = 1/e`.
pub fn xlog1_over_x(x: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x));
    if x == 0.0 || x == 1.0 {
        0.0
    } else {
        -x * x.ln()
    }
}
