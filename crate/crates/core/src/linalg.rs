//! Minimal dense linear algebra for the small (≤ 5×5) symmetric systems that
//! show up in logistic fits and Gaussian conditional draws.

use crate::error::{Error, Result};

/// Cholesky factor L (lower triangular, row-major) of a symmetric positive
/// definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Vec<f64>,
    n: usize,
}

impl Cholesky {
    /// Factor a row-major symmetric matrix. Fails if the matrix is not
    /// numerically positive definite.
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix shape mismatch");
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !sum.is_finite() || sum <= 0.0 {
                        return Err(Error::NotPositiveDefinite);
                    }
                    l[i * n + j] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { l, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        // forward: L z = b
        let mut z = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                z[i] -= self.l[i * n + k] * z[k];
            }
            z[i] /= self.l[i * n + i];
        }
        // backward: L' x = z
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                z[i] -= self.l[k * n + i] * z[k];
            }
            z[i] /= self.l[i * n + i];
        }
        z
    }

    /// Inverse of A, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        // symmetrize against round-off
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (inv[i * n + j] + inv[j * n + i]);
                inv[i * n + j] = m;
                inv[j * n + i] = m;
            }
        }
        inv
    }

    /// Compute L z for a vector z (used to turn iid normals into draws with
    /// covariance A).
    #[allow(clippy::needless_range_loop)]
    pub fn l_mul(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(z.len(), n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..=i {
                s += self.l[i * n + k] * z[k];
            }
            out[i] = s;
        }
        out
    }

    /// Solve L' x = z (used to draw from a Gaussian given its precision
    /// matrix: if A is the precision with factor L, x = L'^{-1} z has
    /// covariance A^{-1}).
    pub fn lt_solve(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(z.len(), n);
        let mut x = z.to_vec();
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.l[k * n + i] * x[k];
            }
            x[i] /= self.l[i * n + i];
        }
        x
    }
}

/// Check symmetry of a row-major matrix to within an absolute tolerance
/// scaled by the largest entry.
pub fn is_symmetric(a: &[f64], n: usize) -> bool {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (a[i * n + j] - a[j * n + i]).abs() > 1e-9 * scale {
                return false;
            }
        }
    }
    true
}
