//! Dense column-major matrices sized for mortality panels (ages × years).
//!
//! Observations are year columns, so column-major storage keeps each
//! year vector contiguous. The symmetric eigensolver is a cyclic Jacobi
//! sweep; panels top out around 101 ages, where Jacobi is fast and
//! accurate to machine precision.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;

/// Dense `rows × cols` matrix of `f64`, column-major.
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

    /// Build from column-major data; panics if the length does not match.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    /// Build from a function of (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.rows + r] = v;
    }

    /// Contiguous column slice (one year vector).
    #[inline]
    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn row_copy(&self, r: usize) -> Vec<f64> {
        (0..self.cols).map(|c| self.get(r, c)).collect()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Per-row means (mean over columns).
    pub fn row_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.rows];
        for c in 0..self.cols {
            for (r, v) in self.col(c).iter().enumerate() {
                m[r] += v;
            }
        }
        let n = self.cols as f64;
        for v in &mut m {
            *v /= n;
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
pub struct SymEigen {
    /// Eigenvalues in nonincreasing order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors; `vectors[i]` pairs with `values[i]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi eigensolver for a symmetric matrix given as full storage.
///
/// `a` is `n × n` in row-major (symmetry makes the layout moot). Converges
/// to machine precision; sweeps are capped defensively at 100.
pub fn sym_eigen(a: &[f64], n: usize) -> SymEigen {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    // v starts as identity, accumulates rotations; column j is eigenvector j.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[i * n + j] * m[i * n + j];
            }
        }
        s
    };
    let scale: f64 = (0..n).map(|i| fmath::abs(m[i * n + i])).fold(0.0, f64::max);
    let tol_side = scale.max(1e-300) * 1e-15;
    let tol = tol_side * tol_side * (n as f64);

    for _sweep in 0..100 {
        if off(&m) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if fmath::abs(apq) < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                // Numerically stable tangent of the rotation angle.
                let t = if theta >= 0.0 {
                    1.0 / (theta + fmath::hypot(1.0, theta))
                } else {
                    1.0 / (theta - fmath::hypot(1.0, theta))
                };
                let c = 1.0 / fmath::hypot(1.0, t);
                let s = t * c;

                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[j * n + j]
            .partial_cmp(&m[i * n + i])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let values: Vec<f64> = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&j| (0..n).map(|k| v[k * n + j]).collect())
        .collect();
    SymEigen { values, vectors }
}

/// Sample covariance of the columns of `y` with divisor `n` (population form):
/// `S = Σ_t (y_t − ȳ)(y_t − ȳ)ᵀ / n`, returned row-major together with ȳ.
pub fn column_covariance(y: &Mat) -> (Vec<f64>, Vec<f64>) {
    let p = y.rows();
    let n = y.cols();
    let mean = y.row_means();
    let mut s = vec![0.0; p * p];
    let mut centered = vec![0.0; p];
    for t in 0..n {
        let col = y.col(t);
        for r in 0..p {
            centered[r] = col[r] - mean[r];
        }
        for i in 0..p {
            let ci = centered[i];
            for j in i..p {
                s[i * p + j] += ci * centered[j];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    for i in 0..p {
        for j in i..p {
            let v = s[i * p + j] * inv_n;
            s[i * p + j] = v;
            s[j * p + i] = v;
        }
    }
    (s, mean)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sum(v: &[f64]) -> f64 {
    v.iter().sum()
}
