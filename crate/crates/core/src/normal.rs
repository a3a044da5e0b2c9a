//! Standard normal distribution helpers.

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::standard()
}

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    standard().cdf(x)
}

/// Standard normal quantile function.
pub fn quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
