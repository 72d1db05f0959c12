//! Dense real linear algebra: rank and null spaces via a rank-revealing
//! factorization, plus the handful of matrix/vector products the rest of the
//! crate needs.
//!
//! The factorization is a one-sided Jacobi SVD implemented here rather than
//! pulled from a BLAS binding. The matrices involved are desk-scale (at most
//! a few hundred rows or columns) and Jacobi rotations are accurate to a few
//! ulps at those sizes.

use crate::error::{Error, Result};

/// Default relative tolerance for declaring a singular value zero.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Dense row-major f64 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Build from a row-major buffer. Rejects non-finite entries and
    /// length mismatches.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix buffer has {} entries, expected {}x{}={}",
                data.len(),
                rows,
                cols,
                rows * cols
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Shape(format!(
                "matvec: vector length {} vs {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| dot(self.row(i), x))
            .collect())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Orthonormal basis of a null space.
///
/// Vectors are unit length, mutually orthonormal, and each satisfies
/// `‖A·v‖∞ ≤ rel_tol · σ_max · max(rows, cols)` for the matrix it was
/// computed from.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

struct JacobiSvd {
    /// Singular values, descending.
    singular: Vec<f64>,
    /// Right singular vectors as columns; `v.col(k)` pairs with `singular[k]`.
    v: Matrix,
}

/// One-sided (Hestenes) Jacobi SVD: orthogonalize the columns of a working
/// copy of A by plane rotations, accumulating them into V. On exit the k-th
/// column norm of the working copy is σ_k and V holds the right singular
/// vectors. Rank-deficient and wide matrices are fine; surplus columns
/// converge to zero norm.
fn jacobi_svd(a: &Matrix) -> JacobiSvd {
    let m = a.rows();
    let n = a.cols();
    let mut w = a.clone();
    let mut v = Matrix::identity(n);
    if m == 0 || n == 0 {
        return JacobiSvd { singular: vec![0.0; n], v };
    }

    let eps = f64::EPSILON;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for r in 0..m {
                    let wi = w.get(r, i);
                    let wj = w.get(r, j);
                    alpha += wi * wi;
                    beta += wj * wj;
                    gamma += wi * wj;
                }
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..m {
                    let wi = w.get(r, i);
                    let wj = w.get(r, j);
                    w.set(r, i, c * wi - s * wj);
                    w.set(r, j, s * wi + c * wj);
                }
                for r in 0..n {
                    let vi = v.get(r, i);
                    let vj = v.get(r, j);
                    v.set(r, i, c * vi - s * vj);
                    v.set(r, j, s * vi + c * vj);
                }
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sigmas: Vec<f64> = (0..n).map(|j| norm2(&w.col(j))).collect();
    order.sort_by(|&p, &q| sigmas[q].partial_cmp(&sigmas[p]).unwrap());
    let singular: Vec<f64> = order.iter().map(|&j| sigmas[j]).collect();
    let mut vs = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        for r in 0..n {
            vs.set(r, k, v.get(r, j));
        }
    }
    JacobiSvd { singular, v: vs }
}

fn check_matrix_and_tol(a: &Matrix, rel_tol: f64) -> Result<()> {
    if !a.is_finite() {
        return Err(Error::InvalidMatrix);
    }
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::Config(format!(
            "rel_tol must lie in (0,1), got {rel_tol}"
        )));
    }
    Ok(())
}

/// Threshold below which a singular value counts as zero.
fn sigma_threshold(singular: &[f64], rows: usize, cols: usize, rel_tol: f64) -> f64 {
    let sigma_max = singular.first().copied().unwrap_or(0.0);
    rel_tol * sigma_max * rows.max(cols) as f64
}

/// Orthonormal basis of `{v : Av = 0}` at the given relative tolerance.
pub fn null_space(a: &Matrix, rel_tol: f64) -> Result<KernelBasis> {
    check_matrix_and_tol(a, rel_tol)?;
    if a.rows() == 0 {
        // No constraints: the kernel is the whole space.
        let vectors = (0..a.cols())
            .map(|j| {
                let mut e = vec![0.0; a.cols()];
                e[j] = 1.0;
                e
            })
            .collect::<Vec<_>>();
        return Ok(KernelBasis { dim: a.cols(), vectors });
    }
    let svd = jacobi_svd(a);
    let thresh = sigma_threshold(&svd.singular, a.rows(), a.cols(), rel_tol);
    let mut vectors = Vec::new();
    for (k, &s) in svd.singular.iter().enumerate() {
        if s <= thresh {
            vectors.push(svd.v.col(k));
        }
    }
    Ok(KernelBasis { dim: vectors.len(), vectors })
}

/// Numerical rank at the given relative tolerance. Satisfies
/// `rank(A, t) + null_space(A, t).dim == cols(A)`.
pub fn rank(a: &Matrix, rel_tol: f64) -> Result<usize> {
    check_matrix_and_tol(a, rel_tol)?;
    if a.rows() == 0 {
        return Ok(0);
    }
    let svd = jacobi_svd(a);
    let thresh = sigma_threshold(&svd.singular, a.rows(), a.cols(), rel_tol);
    Ok(svd.singular.iter().filter(|&&s| s > thresh).count())
}

/// Singular values in descending order.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    if !a.is_finite() {
        return Err(Error::InvalidMatrix);
    }
    Ok(jacobi_svd(a).singular)
}

/// Project `x` onto the span of an orthonormal set of vectors.
pub fn project_onto(basis: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in basis {
        let c = dot(b, x);
        for (o, &bv) in out.iter_mut().zip(b) {
            *o += c * bv;
        }
    }
    out
}
