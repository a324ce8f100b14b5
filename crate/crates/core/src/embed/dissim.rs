use ndarray::{Array2, ArrayView2};

use crate::numstats::quantile_sorted;

/// Symmetric, zero-diagonal pairwise dissimilarities.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    pub d: Array2<f64>,
}

impl DissimilarityMatrix {
    /// Wrap a precomputed matrix, checking symmetry, zero diagonal and
    /// finiteness.
    pub fn from_matrix(d: Array2<f64>) -> Option<Self> {
        let n = d.nrows();
        if d.ncols() != n {
            return None;
        }
        for i in 0..n {
            if d[[i, i]] != 0.0 {
                return None;
            }
            for j in 0..i {
                let v = d[[i, j]];
                if !v.is_finite() || v < 0.0 || v != d[[j, i]] {
                    return None;
                }
            }
        }
        Some(Self { d })
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }
}

/// Interquartile range with linear interpolation.
pub fn iqr(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)
}

/// `d_ij = (1 - blend)·|niecc_i - niecc_j| / s + blend·‖x_i - x_j‖ / √p`,
/// with `s` the interquartile range of `niecc` (1 when that is zero).
pub fn niecc_dissimilarity(niecc: &[f64], x_std: ArrayView2<'_, f64>, blend: f64) -> DissimilarityMatrix {
    let n = niecc.len();
    let s = match iqr(niecc) {
        v if v > 0.0 && v.is_finite() => v,
        _ => 1.0,
    };
    let p = x_std.ncols();
    let mut d = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let mut v = 0.0;
            if blend < 1.0 {
                v += (1.0 - blend) * (niecc[i] - niecc[j]).abs() / s;
            }
            if blend > 0.0 && p > 0 {
                let sq: f64 = x_std
                    .row(i)
                    .iter()
                    .zip(x_std.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                v += blend * sq.sqrt() / (p as f64).sqrt();
            }
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    DissimilarityMatrix { d }
}
