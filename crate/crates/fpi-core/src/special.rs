//! Small special-function helpers shared by the statistics modules.
//!
//! Everything is evaluated in log space so that photon numbers up to a few
//! hundred stay finite in double precision.

/// Natural log of `n!` via `lgamma(n + 1)`.
pub fn ln_factorial(n: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

/// Natural log of the binomial coefficient `C(n, k)`.
///
/// Requires `k <= n`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Poisson probability mass `e^-m m^k / k!`.
pub fn poisson_pmf(mean: f64, k: u32) -> f64 {
    debug_assert!(mean >= 0.0);
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    libm::exp(-mean + k as f64 * libm::log(mean) - ln_factorial(k as u64))
}

/// Poisson cumulative probability `P(X <= k)` by direct summation.
///
/// Exact enough for the photon numbers used here (k up to a few hundred);
/// terms are accumulated in increasing order.
pub fn poisson_cdf(mean: f64, k: u32) -> f64 {
    let mut sum = 0.0;
    for j in 0..=k {
        sum += poisson_pmf(mean, j);
    }
    sum.min(1.0)
}

/// Upper Gaussian tail `Q(x) = P(Z > x)` for a standard normal `Z`.
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}
