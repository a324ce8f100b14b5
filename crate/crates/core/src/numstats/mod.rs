//! Numerical primitives shared by the model-fitting modules.

mod linalg;
mod ols;
mod rng;
mod special;

pub use linalg::{solve_spd, Cholesky};
pub use ols::{gaussian_loglik, ols_fit, OlsFit};
pub use rng::RngStream;
pub use special::{chisq_cdf, chisq_sf, gamma_p, gamma_q, log_gamma};

/// Empirical quantile with linear interpolation between order statistics.
///
/// `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
