//! Small dense linear algebra kernels: row-major matrices, Cholesky
//! factorization/inversion for SPD matrices, and a cyclic Jacobi
//! eigendecomposition for symmetric matrices.
//!
//! Everything is deterministic: fixed sweep order, fixed accumulation order,
//! no pivot randomization. Adequate at desk scale (D up to a few thousand).

use crate::error::{OodError, Result};

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(OodError::DimensionMismatch {
                context: "matrix payload",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(OodError::DimensionMismatch {
                context: "matvec",
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// A^T x for a rows x cols matrix (x has length rows).
    pub fn matvec_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(OodError::DimensionMismatch {
                context: "matvec_t",
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            let row = self.row(r);
            for c in 0..self.cols {
                out[c] += row[c] * xr;
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Max |a_ij - a_ji| over all pairs; 0 for symmetric matrices.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// x^T A x for square A.
pub fn quad_form(a: &Mat, x: &[f64]) -> Result<f64> {
    let ax = a.matvec(x)?;
    Ok(x.iter().zip(&ax).map(|(u, v)| u * v).sum())
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    let n = a.rows();
    if a.cols() != n {
        return Err(OodError::DimensionMismatch {
            context: "cholesky",
            expected: n,
            got: a.cols(),
        });
    }
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(OodError::SingularCovariance);
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Inverse of an SPD matrix via its Cholesky factor, symmetrized on output.
pub fn cholesky_inverse(a: &Mat) -> Result<Mat> {
    let n = a.rows();
    let l = cholesky(a)?;
    let mut inv = Mat::zeros(n, n);
    // solve L L^T x = e_k column by column
    let mut y = vec![0.0; n];
    for k in 0..n {
        for i in 0..n {
            let mut sum = if i == k { 1.0 } else { 0.0 };
            for j in 0..i {
                sum -= l.get(i, j) * y[j];
            }
            y[i] = sum / l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut sum = y[i];
            for j in (i + 1)..n {
                sum -= l.get(j, i) * y[j];
            }
            y[i] = sum / l.get(i, i);
        }
        for i in 0..n {
            inv.set(i, k, y[i]);
        }
    }
    // enforce exact symmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (inv.get(i, j) + inv.get(j, i));
            inv.set(i, j, v);
            inv.set(j, i, v);
        }
    }
    Ok(inv)
}

fn off_diagonal_norm(a: &Mat) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += 2.0 * a.get(i, j) * a.get(i, j);
        }
    }
    s.sqrt()
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues sorted descending with their eigenvectors as matching
/// columns; ties keep the lower sweep index so the ordering is deterministic.
/// Convergence: off-diagonal norm below 1e-10 relative to the input scale.
pub fn sym_eigen_desc(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    const TOL: f64 = 1e-10;
    const MAX_SWEEPS: usize = 100;

    let n = a.rows();
    if a.cols() != n {
        return Err(OodError::DimensionMismatch {
            context: "eigendecomposition",
            expected: n,
            got: a.cols(),
        });
    }
    if a.symmetry_defect() > 1e-9 * a.frobenius_norm().max(1.0) {
        return Err(OodError::EigenFailure(
            "input matrix is not symmetric".into(),
        ));
    }

    let mut m = a.clone();
    let mut v = Mat::identity(n);
    let scale = a.frobenius_norm().max(1.0);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= TOL * scale {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta.abs() > 1e150 {
                    // avoid overflow in theta^2
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m.set(p, p, app - t * apq);
                m.set(q, q, aqq + t * apq);
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for i in 0..n {
                    if i != p && i != q {
                        let aip = m.get(i, p);
                        let aiq = m.get(i, q);
                        let new_ip = aip - s * (aiq + tau * aip);
                        let new_iq = aiq + s * (aip - tau * aiq);
                        m.set(i, p, new_ip);
                        m.set(p, i, new_ip);
                        m.set(i, q, new_iq);
                        m.set(q, i, new_iq);
                    }
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, vip - s * (viq + tau * vip));
                    v.set(i, q, viq + s * (vip - tau * viq));
                }
            }
        }
    }
    if !converged && off_diagonal_norm(&m) > TOL * scale {
        return Err(OodError::EigenFailure(format!(
            "jacobi sweep limit reached, off-diagonal norm {:.3e}",
            off_diagonal_norm(&m)
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m.get(j, j)
            .partial_cmp(&m.get(i, i))
            .unwrap()
            .then(i.cmp(&j))
    });
    let values: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Mat::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, new_col, v.get(r, old_col));
        }
    }
    Ok((values, vectors))
}
