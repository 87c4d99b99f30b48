//! Small dense matrices and a cyclic Jacobi eigensolver for the symmetric
//! principal matrices (N is the number of interaction supports, so tens at
//! most; accuracy matters more than speed here).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not symmetric: |A - A^T| max = {asym:e} exceeds {tol:e}")]
    NotSymmetric { asym: f64, tol: f64 },
    #[error("Jacobi sweep limit reached without converging (off-diagonal norm {0:e})")]
    NoConvergence(f64),
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "ragged rows");
            for (j, v) in r.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute asymmetry |A_ij - A_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }
}

/// Eigendecomposition of a symmetric matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors (as columns).
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// vectors.column(k) belongs to values[k]
    pub vectors: Matrix,
}

fn off_norm(a: &Matrix) -> f64 {
    let n = a.n();
    let mut off: f64 = 0.0;
    for p in 0..n.saturating_sub(1) {
        for q in (p + 1)..n {
            off += a.get(p, q).abs();
        }
    }
    off
}

/// Cyclic Jacobi rotations. Deterministic, near machine precision for the
/// desk-scale matrices this crate deals with.
pub fn jacobi_eigen(a: &Matrix) -> Result<SymEigen, LinalgError> {
    let scale = a.max_abs().max(1e-300);
    let tol = 1e-12 * scale;
    let asym = a.asymmetry();
    if asym > tol {
        return Err(LinalgError::NotSymmetric { asym, tol });
    }
    let n = a.n();
    let mut a = a.clone();
    // enforce exact symmetry so rotations stay consistent
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    let mut v = Matrix::identity(n);
    if n == 1 {
        return Ok(SymEigen { values: vec![a.get(0, 0)], vectors: v });
    }
    const MAX_SWEEPS: usize = 50;
    for _ in 0..MAX_SWEEPS {
        if off_norm(&a) < 1e-15 * scale * (n * n) as f64 {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                // stable tangent of the rotation angle
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sgn = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sgn / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for i in 0..n {
                    if i != p && i != q {
                        let aip = a.get(i, p);
                        let aiq = a.get(i, q);
                        let nip = aip - s * (aiq + tau * aip);
                        let niq = aiq + s * (aip - tau * aiq);
                        a.set(i, p, nip);
                        a.set(p, i, nip);
                        a.set(i, q, niq);
                        a.set(q, i, niq);
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
    let off = off_norm(&a);
    if off > 1e-10 * scale * (n * n) as f64 {
        return Err(LinalgError::NoConvergence(off));
    }
    // sort ascending, fix sign so the largest-magnitude component is positive
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
    let mut values = Vec::with_capacity(n);
    let mut vectors = Matrix::zeros(n);
    for (k, &src) in order.iter().enumerate() {
        values.push(a.get(src, src));
        let col = v.column(src);
        let lead = col
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.abs().partial_cmp(&y.1.abs()).unwrap())
            .map(|(_, &val)| val)
            .unwrap_or(1.0);
        let sgn = if lead < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors.set(i, k, sgn * col[i]);
        }
    }
    Ok(SymEigen { values, vectors })
}
