//! Dense symmetric eigensolver: cyclic Jacobi rotations, eigenvalues only.
//!
//! Rotation bookkeeping follows the classical threshold strategy (Numerical
//! Recipes section 11.1): the first sweeps skip elements below a shrinking
//! threshold, later sweeps zero elements that are negligible relative to
//! their diagonal entries. Only eigenvalues are accumulated; the limit laws
//! never need eigenvectors.

use crate::{Result, UstatError};

/// Row-major dense square matrix.
#[derive(Clone, Debug)]
pub(crate) struct Dense {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = f(i, j);
            }
        }
        Dense { n, a }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn max_asym(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_skew_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            worst = worst.max(self.get(i, i).abs());
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) + self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Frobenius norm of the whole matrix.
    pub fn frobenius(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `A^T A`; symmetric positive semidefinite.
    pub fn gram(&self) -> Dense {
        let n = self.n;
        let mut b = vec![0.0; n * n];
        for k in 0..n {
            let row = &self.a[k * n..(k + 1) * n];
            for i in 0..n {
                let v = row[i];
                if v == 0.0 {
                    continue;
                }
                let out = &mut b[i * n..(i + 1) * n];
                for (o, r) in out.iter_mut().zip(row) {
                    *o += v * r;
                }
            }
        }
        Dense { n, a: b }
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, iterated
/// until the off-diagonal Frobenius norm drops below `off_tol`. The matrix is
/// consumed. Values are returned unsorted.
pub(crate) fn jacobi_eigenvalues(mut m: Dense, off_tol: f64) -> Result<Vec<f64>> {
    let n = m.n;
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![m.a[0]]);
    }
    const MAX_SWEEPS: usize = 64;
    let a = &mut m.a;
    for sweep in 0..MAX_SWEEPS {
        let mut off_sq = 0.0;
        let mut abs_sum = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                let v = a[p * n + q];
                off_sq += v * v;
                abs_sum += v.abs();
            }
        }
        if (2.0 * off_sq).sqrt() <= off_tol {
            return Ok((0..n).map(|i| a[i * n + i]).collect());
        }
        let thresh = if sweep < 3 { 0.2 * abs_sum / (n * n) as f64 } else { 0.0 };

        for p in 0..(n - 1) {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                let g = 100.0 * apq.abs();
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // negligible relative to both diagonals: flush to zero
                if sweep >= 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                if apq.abs() <= thresh || apq == 0.0 {
                    continue;
                }
                let h = aqq - app;
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        t = -t;
                    }
                    t
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let tapq = t * apq;

                a[p * n + p] = app - tapq;
                a[q * n + q] = aqq + tapq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                // rotate rows p and q, then mirror into the columns
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let gip = a[p * n + i];
                    let giq = a[q * n + i];
                    let new_p = gip - s * (giq + gip * tau);
                    let new_q = giq + s * (gip - giq * tau);
                    a[p * n + i] = new_p;
                    a[q * n + i] = new_q;
                    a[i * n + p] = new_p;
                    a[i * n + q] = new_q;
                }
            }
        }
    }
    Err(UstatError::NonConvergence)
}
