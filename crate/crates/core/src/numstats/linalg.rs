//! Dense symmetric positive-definite solves.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::NumError;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<'_, f64>) -> Result<Self, NumError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(NumError::Dimension(format!(
                "expected a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= l[[j, k]] * l[[j, k]];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(NumError::NotPositiveDefinite { pivot: j, value: diag });
            }
            let ljj = diag.sqrt();
            l[[j, j]] = ljj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / ljj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn solve(&self, b: ArrayView1<'_, f64>) -> Result<Array1<f64>, NumError> {
        let n = self.lower.nrows();
        if b.len() != n {
            return Err(NumError::Dimension(format!(
                "right-hand side has length {}, matrix is {n}x{n}",
                b.len()
            )));
        }
        let l = &self.lower;
        let mut y = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        let mut x = Array1::<f64>::zeros(n);
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * x[k];
            }
            x[i] = s / l[[i, i]];
        }
        Ok(x)
    }
}

/// Solve `A x = b` for symmetric positive-definite `A`.
pub fn solve_spd(a: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Result<Array1<f64>, NumError> {
    if a.nrows() != b.len() {
        return Err(NumError::Dimension(format!(
            "matrix has {} rows, right-hand side has {}",
            a.nrows(),
            b.len()
        )));
    }
    Cholesky::factor(a)?.solve(b)
}
