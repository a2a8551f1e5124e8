//! Small dense linear algebra and the regularized Gram tracker.
//!
//! Everything here works on `f64` and row-major storage. Dimensions in this
//! crate are tiny (tens at most), so the routines favour clarity over blocking.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Absorbs between two full re-factorizations of a [`GramTracker`].
pub const REFRESH_INTERVAL: usize = 256;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Kronecker product `a ⊗ b`, laid out as `out[i * b.len() + j] = a[i] * b[j]`.
pub fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &ai in a {
        out.extend(b.iter().map(|&bj| ai * bj));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = scale;
        }
        m
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged rows"));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ x`
    pub fn mul_vec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, self.row(i), &mut out);
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                axpy(a, orow, dst);
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// `self += alpha * x yᵀ`
    pub fn add_outer(&mut self, alpha: f64, x: &[f64], y: &[f64]) {
        for (i, &xi) in x.iter().enumerate() {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            axpy(alpha * xi, y, row);
        }
    }

    /// `xᵀ self x` for square matrices.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.rows).map(|i| x[i] * dot(self.row(i), x)).sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation from symmetry, `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    fn symmetrize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, v);
                self.set(j, i, v);
            }
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    lower: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(invalid("cholesky of non-square matrix"));
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= l.get(j, k) * l.get(j, k);
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = sqrt(diag);
            l.set(j, j, ljj);
            for i in (j + 1)..n {
                let mut v = a.get(i, j);
                for k in 0..j {
                    v -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, v / ljj);
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut v = y[i];
            for k in 0..i {
                v -= self.lower.get(i, k) * y[k];
            }
            y[i] = v / self.lower.get(i, i);
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in (i + 1)..n {
                v -= self.lower.get(k, i) * x[k];
            }
            x[i] = v / self.lower.get(i, i);
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `Lᵀ x`
    pub fn mul_upper(&self, x: &[f64]) -> Vec<f64> {
        self.lower.mul_vec_t(x)
    }

    pub fn logdet(&self) -> f64 {
        (0..self.dim())
            .map(|i| 2.0 * ln(self.lower.get(i, i)))
            .sum()
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv.symmetrize();
        inv
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j) * m.get(i, j))
            .sum();
        let scale: f64 = m.as_slice().iter().map(|v| v * v).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Singular values of an arbitrary matrix, ascending.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let gram = if a.rows() >= a.cols() {
        a.transpose().matmul(a)
    } else {
        a.matmul(&a.transpose())
    };
    symmetric_eigenvalues(&gram)
        .into_iter()
        .map(|v| sqrt(v.max(0.0)))
        .collect()
}

/// Regularized Gram matrix `Λ = λI + Σ x xᵀ` with a maintained inverse and
/// log-determinant, plus the ridge right-hand side `Σ x y`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramTracker {
    dim: usize,
    lambda: f64,
    matrix: Matrix,
    inverse: Matrix,
    logdet: f64,
    target_accum: Vec<f64>,
    count: usize,
    since_refresh: usize,
}

/// Output of [`GramTracker::ridge_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeEstimate {
    pub weights: Vec<f64>,
    /// Number of samples the source tracker had absorbed.
    pub tracker_count: usize,
}

impl GramTracker {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("gram dimension must be positive"));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid("regularizer must be positive and finite"));
        }
        Ok(Self {
            dim,
            lambda,
            matrix: Matrix::scaled_identity(dim, lambda),
            inverse: Matrix::scaled_identity(dim, 1.0 / lambda),
            logdet: dim as f64 * ln(lambda),
            target_accum: vec![0.0; dim],
            count: 0,
            since_refresh: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn inverse(&self) -> &Matrix {
        &self.inverse
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn target_accum(&self) -> &[f64] {
        &self.target_accum
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Absorbs one sample: `Λ += x xᵀ`, `b += x y`.
    ///
    /// The inverse follows the rank-one (Sherman–Morrison) identity and the
    /// log-determinant grows by `log(1 + xᵀ Λ⁻¹ x)`; both are re-derived from a
    /// fresh Cholesky factorization every [`REFRESH_INTERVAL`] absorbs.
    pub fn absorb(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(invalid("sample length does not match gram dimension"));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite sample"));
        }
        let u = self.inverse.mul_vec(x);
        let q = dot(x, &u).max(0.0);
        self.matrix.add_outer(1.0, x, x);
        self.inverse.add_outer(-1.0 / (1.0 + q), &u, &u);
        self.logdet += libm::log1p(q);
        axpy(y, x, &mut self.target_accum);
        self.count += 1;
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_INTERVAL {
            self.refresh()?;
        }
        Ok(())
    }

    /// Recomputes the inverse and log-determinant from the accumulated matrix.
    pub fn refresh(&mut self) -> Result<()> {
        let chol = Cholesky::new(&self.matrix)?;
        self.inverse = chol.inverse();
        self.logdet = chol.logdet();
        self.since_refresh = 0;
        Ok(())
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::new(&self.matrix)
    }

    /// `Λ⁻¹ b` for an arbitrary right-hand side.
    pub fn apply_inverse(&self, rhs: &[f64]) -> Vec<f64> {
        self.inverse.mul_vec(rhs)
    }

    pub fn ridge_solve(&self) -> RidgeEstimate {
        RidgeEstimate {
            weights: self.apply_inverse(&self.target_accum),
            tracker_count: self.count,
        }
    }

    /// `‖x‖_{Λ⁻¹} = √(xᵀ Λ⁻¹ x)`.
    pub fn weighted_norm(&self, x: &[f64]) -> f64 {
        inverse_norm(&self.inverse, x)
    }

    /// `‖x‖_Λ = √(xᵀ Λ x)`.
    pub fn gram_norm(&self, x: &[f64]) -> f64 {
        sqrt(self.matrix.quad_form(x).max(0.0))
    }

    /// `log det Λ_now − snapshot_logdet`.
    pub fn logdet_gap(&self, snapshot_logdet: f64) -> f64 {
        self.logdet - snapshot_logdet
    }
}

/// `√(xᵀ M x)` for a stored inverse Gram `M`, clamped at zero.
pub fn inverse_norm(inverse: &Matrix, x: &[f64]) -> f64 {
    sqrt(inverse.quad_form(x).max(0.0))
}
