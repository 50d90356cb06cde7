//! Small dense linear algebra over a generic [`Scalar`].
//!
//! Matrices are row-major. The `vec`/`unvec` helpers use column-major
//! order, which is the convention under which `vec(b uᵀ A) = (Aᵀ ⊗ b) u`.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LabError::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LabError::Shape("ragged rows".into()));
        }
        Ok(Self { rows: r, cols: c, data: rows.concat() })
    }

    pub fn diag(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<T>]) -> Result<Self> {
        let c = cols.len();
        let r = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|col| col.len() != r) {
            return Err(LabError::Shape("ragged columns".into()));
        }
        Ok(Self::from_fn(r, c, |i, j| cols[j][i]))
    }

    pub fn outer(a: &[T], b: &[T]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major storage.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn set_column(&mut self, j: usize, v: &[T]) {
        assert_eq!(v.len(), self.rows, "column length");
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn try_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(LabError::Shape(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(self.matmul(rhs))
    }

    /// Panics on inner-dimension mismatch; use [`Matrix::try_matmul`] at API boundaries.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let b_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ * rhs` without materialising the transpose.
    pub fn t_matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows, "t_matmul row dimension");
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = rhs.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let o_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * rhsᵀ`.
    pub fn matmul_t(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.cols, "matmul_t column dimension");
        Self::from_fn(self.rows, rhs.rows, |i, j| dot(self.row(i), rhs.row(j)))
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec dimension");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ v`.
    pub fn t_matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "t_matvec dimension");
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn add_assign_scaled(&mut self, other: &Self, s: T) {
        assert_eq!(self.shape(), other.shape(), "add_assign_scaled shape");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn frobenius_inner(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape(), "frobenius_inner shape");
        dot(&self.data, &other.data)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `(self + selfᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        assert!(self.is_square(), "symmetrize non-square");
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| half * (self[(i, j)] + self[(j, i)]))
    }

    /// Column-major vectorisation.
    pub fn vec(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self[(i, j)]);
            }
        }
        out
    }

    /// Inverse of [`Matrix::vec`].
    pub fn unvec(rows: usize, cols: usize, v: &[T]) -> Result<Self> {
        if v.len() != rows * cols {
            return Err(LabError::Shape(format!("{} entries to unvec into {rows}x{cols}", v.len())));
        }
        Ok(Self::from_fn(rows, cols, |i, j| v[j * rows + i]))
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (p, q) = other.shape();
        Self::from_fn(self.rows * p, self.cols * q, |i, j| {
            self[(i / p, j / q)] * other[(i % p, j % q)]
        })
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> Result<T> {
        if self.data.is_empty() {
            return Ok(T::zero());
        }
        let gram = self.t_matmul(self);
        let eig = SymmetricEigen::new(&gram)?;
        Ok(eig.values.first().copied().unwrap_or(T::zero()).max(T::zero()).sqrt())
    }

    /// Moore-Penrose pseudoinverse via the eigendecomposition of `AᵀA`.
    pub fn pinv(&self) -> Result<Self> {
        let gram = self.t_matmul(self);
        let eig = SymmetricEigen::new(&gram)?;
        let top = eig.values.first().copied().unwrap_or(T::zero()).max(T::zero());
        let sv_tol = top.sqrt() * T::count(self.rows.max(self.cols)) * T::epsilon();
        let tol = sv_tol * sv_tol;
        let n = self.cols;
        let mut gram_pinv = Matrix::zeros(n, n);
        for (k, &lam) in eig.values.iter().enumerate() {
            if lam > tol && lam > T::zero() {
                let v = eig.vectors.column(k);
                gram_pinv.add_assign_scaled(&Matrix::outer(&v, &v), T::one() / lam);
            }
        }
        Ok(gram_pinv.matmul_t(self))
    }

    /// Numerical rank from the singular values of the matrix.
    pub fn rank(&self) -> Result<usize> {
        let gram = self.t_matmul(self);
        let eig = SymmetricEigen::new(&gram)?;
        let top = eig.values.first().copied().unwrap_or(T::zero()).max(T::zero());
        if top == T::zero() {
            return Ok(0);
        }
        let sv_tol = top.sqrt() * T::count(self.rows.max(self.cols)) * T::lit(1e3) * T::epsilon();
        Ok(eig.values.iter().filter(|&&l| l.max(T::zero()).sqrt() > sv_tol).count())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: Self) -> Matrix<T> {
        assert_eq!(self.shape(), rhs.shape(), "add shape");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Scalar> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: Self) -> Matrix<T> {
        assert_eq!(self.shape(), rhs.shape(), "sub shape");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T: Scalar> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: Self) -> Matrix<T> {
        self.matmul(rhs)
    }
}

impl<T: Scalar> Neg for &Matrix<T> {
    type Output = Matrix<T>;
    fn neg(self) -> Matrix<T> {
        self.map(|x| -x)
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

pub fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub_vec<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Matrix with i.i.d. standard normal entries.
pub fn gaussian_matrix<T: Scalar>(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| T::lit(StandardNormal.sample(rng)))
}

pub fn gaussian_vector<T: Scalar>(n: usize, rng: &mut impl Rng) -> Vec<T> {
    (0..n).map(|_| T::lit(StandardNormal.sample(rng))).collect()
}

/// Haar-like random orthogonal matrix: Gram-Schmidt on a Gaussian matrix's columns.
pub fn random_orthogonal<T: Scalar>(n: usize, rng: &mut impl Rng) -> Matrix<T> {
    loop {
        let g = gaussian_matrix::<T>(n, n, rng);
        let mut cols: Vec<Vec<T>> = Vec::with_capacity(n);
        let mut ok = true;
        for j in 0..n {
            let mut v = g.column(j);
            // Two passes keep the basis orthogonal to working precision.
            for _ in 0..2 {
                for q in &cols {
                    let c = dot(q, &v);
                    axpy(&mut v, -c, q);
                }
            }
            let nv = norm(&v);
            if nv <= T::lit(1e-8) {
                ok = false;
                break;
            }
            cols.push(v.into_iter().map(|x| x / nv).collect());
        }
        if ok {
            return Matrix::from_columns(&cols).expect("square");
        }
    }
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues sorted descending.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Matrix<T>,
}

const MAX_SWEEPS: usize = 100;

impl<T: Scalar> SymmetricEigen<T> {
    /// Cyclic Jacobi rotations. Only the upper triangle's symmetric part is used.
    pub fn new(m: &Matrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(LabError::Shape(format!("eigen of {}x{}", m.rows(), m.cols())));
        }
        if !m.is_finite() {
            return Err(LabError::NonFinite("eigensolver input".into()));
        }
        let n = m.rows();
        let mut a = m.symmetrized();
        let mut v = Matrix::identity(n);
        let scale = a.frobenius_norm();
        if scale == T::zero() || n < 2 {
            return Ok(Self::sorted((0..n).map(|i| a[(i, i)]).collect(), v));
        }
        let tol = scale * T::epsilon();
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            let off = off_diagonal_norm(&a);
            if off <= tol {
                converged = true;
                break;
            }
            for p in 0..n - 1 {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let app = a[(p, p)];
                    let aqq = a[(q, q)];
                    let theta = (aqq - app) / (T::lit(2.0) * apq);
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
        if !converged && off_diagonal_norm(&a) > tol * T::lit(1e3) {
            return Err(LabError::Eigen(MAX_SWEEPS));
        }
        Ok(Self::sorted((0..n).map(|i| a[(i, i)]).collect(), v))
    }

    fn sorted(values: Vec<T>, vectors: Matrix<T>) -> Self {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap_or(std::cmp::Ordering::Equal));
        let n = vectors.rows();
        let sorted_vectors = Matrix::from_fn(n, idx.len(), |r, c| vectors[(r, idx[c])]);
        Self { values: idx.iter().map(|&i| values[i]).collect(), vectors: sorted_vectors }
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let n = self.vectors.rows();
        let mut out = Matrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let v = self.vectors.column(k);
            out.add_assign_scaled(&Matrix::outer(&v, &v), f(lam));
        }
        out
    }
}

fn off_diagonal_norm<T: Scalar>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn symmetric_eigenvalues<T: Scalar>(m: &Matrix<T>) -> Result<Vec<T>> {
    Ok(SymmetricEigen::new(m)?.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_and_transposed_variants_agree() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let b = m(&[&[1.0, 0.5], &[-1.0, 2.0], &[0.0, 3.0]]);
        let ab = a.matmul(&b);
        assert_eq!(ab, m(&[&[-1.0, 13.5], &[-1.0, 30.0]]));
        assert_eq!(a.transpose().t_matmul(&b), ab);
        assert_eq!(a.matmul_t(&b.transpose()), ab);
        assert!(a.try_matmul(&a).is_err());
    }

    #[test]
    fn vec_is_column_major() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(a.vec(), vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(Matrix::unvec(2, 2, &a.vec()).unwrap(), a);
    }

    #[test]
    fn kron_vec_identity() {
        // vec(b uᵀ A) = (Aᵀ ⊗ b) u
        let a = m(&[&[1.0, -2.0, 0.5], &[0.3, 1.0, 2.0], &[-1.0, 0.0, 4.0]]);
        let b = vec![0.2, -1.0, 3.0];
        let u = vec![1.5, 0.5, -2.0];
        let lhs = Matrix::outer(&b, &u).matmul(&a).vec();
        let bcol = Matrix::from_columns(&[b.clone()]).unwrap();
        let rhs = a.transpose().kron(&bcol).matvec(&u);
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn eigen_of_diagonal_and_identity() {
        let e = symmetric_eigenvalues(&Matrix::<f64>::identity(4)).unwrap();
        assert_eq!(e, vec![1.0; 4]);
        let e = symmetric_eigenvalues(&Matrix::diag(&[1.0, 3.0, -2.0])).unwrap();
        assert_eq!(e, vec![3.0, 1.0, -2.0]);
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let a = m(&[&[4.0, 1.0, -2.0], &[1.0, 2.0, 0.0], &[-2.0, 0.0, 3.0]]);
        let eig = SymmetricEigen::new(&a).unwrap();
        let back = eig.reconstruct_with(|l| l);
        assert!((&back - &a).max_abs() < 1e-12);
        let vtv = eig.vectors.t_matmul(&eig.vectors);
        assert!((&vtv - &Matrix::identity(3)).max_abs() < 1e-12);
    }

    #[test]
    fn pinv_of_tall_full_rank_is_left_inverse() {
        let a = m(&[&[1.0, 2.0], &[0.0, 1.0], &[3.0, -1.0]]);
        let p = a.pinv().unwrap();
        let pa = p.matmul(&a);
        assert!((&pa - &Matrix::identity(2)).max_abs() < 1e-12);
        assert_eq!(a.rank().unwrap(), 2);
    }

    #[test]
    fn pinv_of_rank_deficient_satisfies_penrose() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0], &[0.0, 0.0]]);
        let p = a.pinv().unwrap();
        let apa = a.matmul(&p).matmul(&a);
        assert!((&apa - &a).max_abs() < 1e-12);
        assert_eq!(a.rank().unwrap(), 1);
    }

    #[test]
    fn operator_norm_of_diagonal() {
        let a = Matrix::<f64>::diag(&[1.0, -5.0, 2.0]);
        assert!((a.operator_norm().unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let q = random_orthogonal::<f64>(7, &mut rng);
        assert!((&q.t_matmul(&q) - &Matrix::identity(7)).max_abs() < 1e-13);
    }

    #[test]
    fn works_in_single_precision() {
        let a = Matrix::<f32>::diag(&[2.0, 1.0]);
        let e = symmetric_eigenvalues(&a).unwrap();
        assert_eq!(e, vec![2.0, 1.0]);
    }
}
