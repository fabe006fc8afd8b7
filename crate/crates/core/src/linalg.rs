//! Small dense row-major matrices and the least-squares solver behind single-domain fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<T>>", into = "Vec<Vec<T>>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("matrix buffer", rows * cols, data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::dims("matrix row", cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
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

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.row_iter().map(<[T]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self · v`
    pub fn mul_vec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(Error::dims("matrix-vector product", self.cols, v.len()));
        }
        Ok(self.row_iter().map(|row| dot(row, v)).collect())
    }

    /// `selfᵀ · v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.rows {
            return Err(Error::dims("transposed matrix-vector product", self.rows, v.len()));
        }
        let mut out = vec![T::zero(); self.cols];
        for (row, &vi) in self.row_iter().zip(v) {
            for (o, &r) in out.iter_mut().zip(row) {
                *o = *o + r * vi;
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != other.rows {
            return Err(Error::dims("matrix product", self.cols, other.rows));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix<T> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, indices: &[usize]) -> Matrix<T> {
        let mut data = Vec::with_capacity(indices.len() * self.rows);
        for row in self.row_iter() {
            data.extend(indices.iter().map(|&j| row[j]));
        }
        Matrix {
            rows: self.rows,
            cols: indices.len(),
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> TryFrom<Vec<Vec<T>>> for Matrix<T> {
    type Error = Error;
    fn try_from(rows: Vec<Vec<T>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl<T: Scalar> From<Matrix<T>> for Vec<Vec<T>> {
    fn from(m: Matrix<T>) -> Self {
        m.to_rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution<T> {
    pub coefficients: Vec<T>,
    pub rank: usize,
    pub singular_values: Vec<T>,
}

impl<T: Scalar> LstsqSolution<T> {
    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.coefficients.len()
    }
}

/// Minimum-norm least-squares solution of `design · x ≈ rhs`.
///
/// Householder QR reduces the tall problem to a square triangular one, whose
/// pseudo-inverse is taken through a one-sided Jacobi SVD.
pub fn lstsq_min_norm<T: Scalar>(design: &Matrix<T>, rhs: &[T]) -> Result<LstsqSolution<T>> {
    let (m, p) = design.shape();
    if rhs.len() != m {
        return Err(Error::dims("least-squares right-hand side", m, rhs.len()));
    }
    if m < p {
        return Err(Error::InvalidArgument(format!(
            "least squares needs at least {p} rows, got {m}"
        )));
    }
    let mut a = design.clone();
    let mut b = rhs.to_vec();
    for k in 0..p {
        let norm = (k..m).fold(T::zero(), |acc, i| acc + a[(i, k)] * a[(i, k)]).sqrt();
        if norm == T::zero() {
            continue;
        }
        let alpha = if a[(k, k)] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|i| a[(i, k)]).collect();
        v[0] = v[0] - alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::of(2.0);
        for j in k..p {
            let s = (k..m).fold(T::zero(), |acc, i| acc + v[i - k] * a[(i, j)]);
            let f = two * s / vnorm2;
            for i in k..m {
                a[(i, j)] = a[(i, j)] - f * v[i - k];
            }
        }
        let s = (k..m).fold(T::zero(), |acc, i| acc + v[i - k] * b[i]);
        let f = two * s / vnorm2;
        for i in k..m {
            b[i] = b[i] - f * v[i - k];
        }
    }
    let mut r = Matrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            r[(i, j)] = a[(i, j)];
        }
    }
    let svd = jacobi_svd(&r);
    let sigma_max = svd.singular_values.iter().fold(T::zero(), |acc, &s| acc.max(s));
    let tol = T::of(m.max(p) as f64) * T::epsilon() * sigma_max;
    let qtb = &b[..p];
    let mut x = vec![T::zero(); p];
    let mut rank = 0;
    for (j, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma <= tol || sigma == T::zero() {
            continue;
        }
        rank += 1;
        let uj: Vec<T> = (0..p).map(|i| svd.u[(i, j)]).collect();
        let coef = dot(&uj, qtb) / sigma;
        for (xi, i) in x.iter_mut().zip(0..p) {
            *xi = *xi + coef * svd.v[(i, j)];
        }
    }
    Ok(LstsqSolution {
        coefficients: x,
        rank,
        singular_values: svd.singular_values,
    })
}

struct Svd<T> {
    u: Matrix<T>,
    singular_values: Vec<T>,
    v: Matrix<T>,
}

/// One-sided Jacobi SVD of a square matrix; `u` has unit (or zero) columns.
fn jacobi_svd<T: Scalar>(a: &Matrix<T>) -> Svd<T> {
    let n = a.cols();
    let mut u = a.clone();
    let mut v = Matrix::identity(n);
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..u.rows() {
                    alpha = alpha + u[(i, p)] * u[(i, p)];
                    beta = beta + u[(i, q)] * u[(i, q)];
                    gamma = gamma + u[(i, p)] * u[(i, q)];
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..u.rows() {
                    let (up, uq) = (u[(i, p)], u[(i, q)]);
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut singular_values = vec![T::zero(); n];
    for (j, sv) in singular_values.iter_mut().enumerate() {
        let norm = (0..u.rows()).fold(T::zero(), |acc, i| acc + u[(i, j)] * u[(i, j)]).sqrt();
        *sv = norm;
        if norm > T::zero() {
            for i in 0..u.rows() {
                u[(i, j)] = u[(i, j)] / norm;
            }
        }
    }
    Svd {
        u,
        singular_values,
        v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_and_transpose_agree() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let v = [1.0, -1.0];
        let via_tr = a.tr_mul_vec(&v).unwrap();
        let via_t = a.transpose().mul_vec(&v).unwrap();
        assert_eq!(via_tr, via_t);
        assert_eq!(via_tr, vec![-3.0, -3.0, -3.0]);
        let ata = a.transpose().matmul(&a).unwrap();
        assert_eq!(ata[(0, 0)], 17.0);
        assert_eq!(ata[(2, 1)], 36.0);
    }

    #[test]
    fn lstsq_exact_system() {
        let a = Matrix::from_rows(&[vec![2.0f64, 0.0], vec![0.0, 4.0], vec![0.0, 0.0]]).unwrap();
        let sol = lstsq_min_norm(&a, &[2.0, 8.0, 0.0]).unwrap();
        assert!((sol.coefficients[0] - 1.0).abs() < 1e-14);
        assert!((sol.coefficients[1] - 2.0).abs() < 1e-14);
        assert_eq!(sol.rank, 2);
    }

    #[test]
    fn lstsq_duplicate_columns_gives_min_norm() {
        // x1 and x2 identical: any split of 3 fits; the min-norm split is equal halves.
        let a = Matrix::from_rows(&[vec![1.0f64, 1.0], vec![2.0, 2.0], vec![-1.0, -1.0]]).unwrap();
        let sol = lstsq_min_norm(&a, &[3.0, 6.0, -3.0]).unwrap();
        assert_eq!(sol.rank, 1);
        assert!(sol.is_rank_deficient());
        assert!((sol.coefficients[0] - 1.5).abs() < 1e-12);
        assert!((sol.coefficients[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn too_few_rows_is_rejected() {
        let a = Matrix::<f64>::zeros(1, 2);
        assert!(lstsq_min_norm(&a, &[0.0]).is_err());
    }

    #[test]
    fn serde_as_nested_rows() {
        let m = Matrix::from_rows(&[vec![1.0, 0.3], vec![0.0, -0.2]]).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(text, "[[1.0,0.3],[0.0,-0.2]]");
        let back: Matrix<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<Matrix<f64>>("[[1.0],[1.0,2.0]]").is_err());
    }
}
