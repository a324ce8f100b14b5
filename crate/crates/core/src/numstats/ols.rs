//! Ordinary least squares with the profiled Gaussian likelihood.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::NumError;

/// Least-squares fit of `y` on a design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Array1<f64>,
    pub residuals: Array1<f64>,
    pub rss: f64,
    pub n: usize,
    /// Maximized Gaussian log-likelihood with variance profiled at rss/n.
    /// `+inf` when `perfect_fit` is set.
    pub loglik: f64,
    pub perfect_fit: bool,
}

const RANK_TOL: f64 = 1e-10;

/// Gaussian log-likelihood at the MLE variance, or `None` for a perfect fit.
pub fn gaussian_loglik(rss: f64, n: usize) -> Option<f64> {
    if rss > 0.0 {
        let nf = n as f64;
        Some(-0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + (rss / nf).ln() + 1.0))
    } else {
        None
    }
}

/// Fit `y ~ design` by Householder QR.
pub fn ols_fit(design: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<OlsFit, NumError> {
    let (n, q) = design.dim();
    if y.len() != n {
        return Err(NumError::Dimension(format!(
            "design has {n} rows, response has {}",
            y.len()
        )));
    }
    if n <= q {
        return Err(NumError::Domain(format!(
            "ols needs more rows than columns ({n} <= {q})"
        )));
    }
    if design.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(NumError::NonFinite("ols input".into()));
    }

    let mut r: Array2<f64> = design.to_owned();
    let mut qty: Array1<f64> = y.to_owned();
    let scale = (0..q)
        .map(|j| r.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);

    for k in 0..q {
        let norm = (k..n).map(|i| r[[i, k]] * r[[i, k]]).sum::<f64>().sqrt();
        if norm <= RANK_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(NumError::RankDeficient(k));
        }
        let alpha = if r[[k, k]] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place of column k below the diagonal.
        let mut v: Vec<f64> = (k..n).map(|i| r[[i, k]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..q {
                let dot: f64 = (k..n).map(|i| v[i - k] * r[[i, j]]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..n {
                    r[[i, j]] -= f * v[i - k];
                }
            }
            let dot: f64 = (k..n).map(|i| v[i - k] * qty[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                qty[i] -= f * v[i - k];
            }
        }
        if r[[k, k]].abs() <= RANK_TOL * scale {
            return Err(NumError::RankDeficient(k));
        }
    }

    let mut beta = Array1::<f64>::zeros(q);
    for i in (0..q).rev() {
        let mut s = qty[i];
        for j in (i + 1)..q {
            s -= r[[i, j]] * beta[j];
        }
        beta[i] = s / r[[i, i]];
    }

    let residuals = &y - &design.dot(&beta);
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let ynorm2: f64 = y.iter().map(|v| v * v).sum();
    let perfect_fit = rss <= 1e-18 * ynorm2;
    let loglik = if perfect_fit {
        f64::INFINITY
    } else {
        gaussian_loglik(rss, n).unwrap_or(f64::INFINITY)
    };
    Ok(OlsFit {
        coefficients: beta,
        residuals,
        rss,
        n,
        loglik,
        perfect_fit,
    })
}
