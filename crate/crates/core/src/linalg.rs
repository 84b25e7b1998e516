//! Small dense matrices: products, inverses, Lyapunov solves and a cyclic
//! Jacobi eigensolver for symmetric matrices.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.cols.max(1)).take(self.rows)).finish()
    }
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from nested rows. All rows must have the same length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        Ok(Matrix { rows: r, cols: c, data: rows.iter().flatten().copied().collect() })
    }

    /// Converts nested `f64` rows, panicking on ragged input. Intended for literals.
    pub fn from_f64(rows: &[&[f64]]) -> Self {
        let v: Vec<Vec<T>> = rows.iter().map(|r| r.iter().map(|&a| T::lit(a)).collect()).collect();
        Self::from_rows(&v).expect("rectangular literal")
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.cols.max(1)).take(self.rows).map(|c| c.to_vec()).collect()
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        self.to_rows().into_iter().map(|r| r.into_iter().map(Real::as_f64).collect()).collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
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

    /// Symmetric part `(M + Mᵀ)/2`.
    pub fn sym(&self) -> Self {
        let half = T::lit(0.5);
        let mut s = Self::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                s[(i, j)] = half * (self[(i, j)] + self[(j, i)]);
            }
        }
        s
    }

    pub fn scale(&self, k: T) -> Self {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| a * k).collect() }
    }

    pub fn mat_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "mat_vec dimension");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Quadratic form `vᵀ M v`.
    pub fn quad_form(&self, v: &[T]) -> T {
        crate::scalar::dot(v, &self.mat_vec(v))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&a| a * a).sum::<T>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::NotSquare { rows: self.rows, cols: self.cols })
        }
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        self.require_square()?;
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let scale = self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        let tiny = scale * T::epsilon() * T::lit(n as f64);
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[(i, col)].abs().partial_cmp(&a[(j, col)].abs()).unwrap())
                .unwrap();
            if a[(piv, col)].abs() <= tiny {
                return Err(Error::Singular);
            }
            if piv != col {
                for k in 0..n {
                    a.data.swap(piv * n + k, col * n + k);
                    inv.data.swap(piv * n + k, col * n + k);
                }
            }
            let d = a[(col, col)];
            for k in 0..n {
                a[(col, k)] = a[(col, k)] / d;
                inv[(col, k)] = inv[(col, k)] / d;
            }
            for r in 0..n {
                if r != col {
                    let f = a[(r, col)];
                    if f != T::zero() {
                        for k in 0..n {
                            a[(r, k)] = a[(r, k)] - f * a[(col, k)];
                            inv[(r, k)] = inv[(r, k)] - f * inv[(col, k)];
                        }
                    }
                }
            }
        }
        Ok(inv)
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        Ok(self.inverse()?.mat_vec(b))
    }

    /// Eigen-decomposition of the symmetric part. See [`sym_eigen`].
    pub fn sym_eigen(&self) -> Result<SymEigen<T>> {
        sym_eigen(self)
    }

    /// Largest eigenvalue of `Sym(M)`.
    pub fn lambda_max_sym(&self) -> Result<T> {
        Ok(*self.sym_eigen()?.values.last().unwrap())
    }

    /// Smallest eigenvalue of `Sym(M)`.
    pub fn lambda_min_sym(&self) -> Result<T> {
        Ok(self.sym_eigen()?.values[0])
    }

    /// Largest singular value.
    pub fn sigma_max(&self) -> T {
        if self.rows == 0 || self.cols == 0 {
            return T::zero();
        }
        let g = &self.transpose() * self;
        let l = g.lambda_max_sym().expect("gram matrix is square");
        l.max(T::zero()).sqrt()
    }

    /// `S^{-1/2}` for symmetric positive definite `S`.
    pub fn spd_inv_sqrt(&self) -> Result<Self> {
        let e = self.sym_eigen()?;
        if e.values[0] <= T::zero() {
            return Err(Error::Singular);
        }
        let d: Vec<T> = e.values.iter().map(|&l| T::one() / l.sqrt()).collect();
        Ok(&(&e.vectors * &Self::from_diag(&d)) * &e.vectors.transpose())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..rhs.cols {
                    out[(i, j)] = out[(i, j)] + a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl<T: Real> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }
}

impl<T: Real> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations on `Sym(m)`. Stops once the off-diagonal
/// Frobenius norm drops below `1e-12` relative to the matrix norm (floored at
/// a few ulps for `f32`).
pub fn sym_eigen<T: Real>(m: &Matrix<T>) -> Result<SymEigen<T>> {
    m.require_square()?;
    let n = m.rows;
    let mut a = m.sym();
    let mut v = Matrix::identity(n);
    if n == 0 {
        return Ok(SymEigen { values: vec![], vectors: v, sweeps: 0 });
    }
    let rel = T::lit(1e-12).max(T::epsilon() * T::lit(4.0));
    let tol = rel * a.frobenius().max(T::min_positive_value());
    let off = |a: &Matrix<T>| {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s = s + a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    let two = T::lit(2.0);
    let mut sweeps = 0;
    while off(&a) > tol && sweeps < MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, c)] = v[(r, i)];
        }
    }
    Ok(SymEigen { values, vectors, sweeps })
}

/// Solves `Aᵀ X + X A = -Q` through the Kronecker form. `A` must have no pair
/// of eigenvalues summing to zero (true for Hurwitz `A`).
pub fn solve_lyapunov<T: Real>(a: &Matrix<T>, q: &Matrix<T>) -> Result<Matrix<T>> {
    a.require_square()?;
    let n = a.rows;
    if q.rows != n || q.cols != n {
        return Err(Error::Dimension(format!("lyapunov rhs is {}x{}, expected {n}x{n}", q.rows, q.cols)));
    }
    // vec(AᵀX + XA) = (I⊗Aᵀ + Aᵀ⊗I) vec(X) with column stacking.
    let nn = n * n;
    let mut k = Matrix::zeros(nn, nn);
    for i in 0..n {
        for j in 0..n {
            let row = j * n + i;
            for l in 0..n {
                // (AᵀX)_{ij} = Σ_l A_{li} X_{lj}
                k[(row, j * n + l)] = k[(row, j * n + l)] + a[(l, i)];
                // (XA)_{ij} = Σ_l X_{il} A_{lj}
                k[(row, l * n + i)] = k[(row, l * n + i)] + a[(l, j)];
            }
        }
    }
    let mut rhs = vec![T::zero(); nn];
    for i in 0..n {
        for j in 0..n {
            rhs[j * n + i] = -q[(i, j)];
        }
    }
    let x = k.solve(&rhs)?;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = x[j * n + i];
        }
    }
    Ok(out.sym())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_f64(rows)
    }

    #[test]
    fn product_and_inverse() {
        let a = m(&[&[4.0, 7.0], &[2.0, 6.0]]);
        let inv = a.inverse().unwrap();
        let id = &a * &inv;
        assert!(id.max_abs_diff(&Matrix::identity(2)) < 1e-14);
        assert!(m(&[&[1.0, 2.0], &[2.0, 4.0]]).inverse().is_err());
    }

    #[test]
    fn jacobi_diagonal_and_rotated() {
        let e = sym_eigen(&m(&[&[3.0, 0.0], &[0.0, -1.0]])).unwrap();
        assert_eq!(e.values, vec![-1.0, 3.0]);
        let e = sym_eigen(&m(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert_abs_diff_eq!(e.values[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn eigenvectors_reconstruct() {
        let a = m(&[&[4.0, 1.0, -2.0], &[1.0, 2.0, 0.5], &[-2.0, 0.5, 3.0]]);
        let e = a.sym_eigen().unwrap();
        let d = Matrix::from_diag(&e.values);
        let back = &(&e.vectors * &d) * &e.vectors.transpose();
        assert!(back.max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn nonsquare_rejected() {
        let a = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(a.sym_eigen(), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn sigma_max_of_upper_triangular() {
        // σ²max of [-1,3;0,-1] is the larger root of s² - 11s + 1.
        let a = m(&[&[-1.0, 3.0], &[0.0, -1.0]]);
        let expect = ((11.0 + 117f64.sqrt()) / 2.0).sqrt();
        assert_abs_diff_eq!(a.sigma_max(), expect, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_known_pair() {
        let a = m(&[&[-1.0, 3.0], &[0.0, -1.0]]);
        let p = solve_lyapunov(&a, &Matrix::identity(2)).unwrap();
        assert!(p.max_abs_diff(&m(&[&[0.5, 0.75], &[0.75, 2.75]])) < 1e-12);
    }

    #[test]
    fn f32_jacobi() {
        let a = Matrix::<f32>::from_f64(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let e = a.sym_eigen().unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-6);
        assert!((e.values[1] - 3.0).abs() < 1e-6);
    }
}
