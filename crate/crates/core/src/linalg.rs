//! Small dense linear algebra: row-major matrices, rank-revealing
//! least squares and symmetric eigenvalues.
//!
//! The problems in this crate are tiny (at most a few dozen columns), so
//! everything here favours clarity over blocking or SIMD.

use std::ops::{Index, IndexMut, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
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

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::config(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::config("ragged rows"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
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

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "dimension mismatch in mul_vec");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ x` without forming the transpose.
    pub fn tr_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.rows, "dimension mismatch in tr_mul_vec");
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Replaces the matrix by (A + Aᵀ)/2.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        let half = T::lit(0.5);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    /// ‖A − Aᵀ‖_F.
    pub fn asymmetry(&self) -> T {
        assert_eq!(self.rows, self.cols);
        let mut s = T::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = self[(i, j)] - self[(j, i)];
                s += d * d;
            }
        }
        s.sqrt()
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
    /// sorted ascending. Only the upper triangle is trusted.
    pub fn symmetric_eigenvalues(&self) -> Vec<T> {
        assert_eq!(self.rows, self.cols, "eigenvalues need a square matrix");
        let n = self.rows;
        let mut a = self.clone();
        a.symmetrize();
        let eps = T::epsilon();
        for _sweep in 0..100 {
            let off: T = (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            let diag: T = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
            if off <= eps * eps * diag || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
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
                }
            }
        }
        let mut ev: Vec<T> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
        ev
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mul for &Matrix<T> {
    type Output = Matrix<T>;

    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch in matrix product");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

/// Solution of a least-squares problem `min ‖A X − B‖_F`.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    /// `cols(A) × cols(B)` coefficient matrix.
    pub solution: Matrix<T>,
    /// |r₁₁| / |r_kk| from the column-pivoted R factor: a cheap lower bound
    /// on the 2-norm condition number of `A`.
    pub condition: f64,
}

/// Relative threshold on the pivoted R diagonal below which a column is
/// treated as linearly dependent.
pub fn default_rank_tolerance<T: Real>(rows: usize, cols: usize) -> T {
    T::epsilon() * T::from_count(rows.max(cols))
}

/// Solves `min ‖A X − B‖_F` by Householder QR with column pivoting.
///
/// Fails with [`Error::RankDeficient`] when some pivot falls below
/// `tol · |r₁₁|` (or when `A` has fewer rows than columns).
pub fn least_squares<T: Real>(a: &Matrix<T>, b: &Matrix<T>, tol: T) -> Result<LeastSquares<T>> {
    let (m, n) = a.shape();
    if b.rows() != m {
        return Err(Error::config(format!(
            "least squares: A has {m} rows but B has {}",
            b.rows()
        )));
    }
    if n == 0 {
        return Err(Error::config("least squares: A has no columns"));
    }
    // Work on contiguous columns; A is stored row-major.
    let column = |x: &Matrix<T>, j: usize| -> Vec<T> { (0..x.rows()).map(|i| x[(i, j)]).collect() };
    let mut r: Vec<Vec<T>> = (0..n).map(|j| column(a, j)).collect();
    let mut qtb: Vec<Vec<T>> = (0..b.cols()).map(|j| column(b, j)).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = m.min(n);
    let mut v = Vec::with_capacity(m);

    for k in 0..steps {
        // Pivot on the remaining column with the largest trailing norm.
        let (pivot, _) = (k..n)
            .map(|j| (j, r[j][k..].iter().map(|&x| x * x).sum::<T>()))
            .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot != k {
            r.swap(k, pivot);
            perm.swap(k, pivot);
        }

        let norm = r[k][k..].iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm == T::zero() {
            continue;
        }
        let alpha = if r[k][k] > T::zero() { -norm } else { norm };
        v.clear();
        v.extend_from_slice(&r[k][k..]);
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        let two_over = T::lit(2.0) / vnorm2;
        for col in r[k + 1..].iter_mut().chain(qtb.iter_mut()) {
            let tail = &mut col[k..];
            let dot: T = v.iter().zip(tail.iter()).map(|(&vi, &x)| vi * x).sum();
            let f = dot * two_over;
            for (x, &vi) in tail.iter_mut().zip(&v) {
                *x -= f * vi;
            }
        }
        r[k][k] = alpha;
        for x in &mut r[k][k + 1..] {
            *x = T::zero();
        }
    }

    let r00 = r[0][0].abs();
    let rmin = (0..steps).map(|k| r[k][k].abs()).fold(T::infinity(), T::min);
    let condition = if steps < n || rmin == T::zero() {
        f64::INFINITY
    } else {
        (r00 / rmin).as_f64()
    };
    if steps < n || r00 == T::zero() || rmin <= tol * r00 {
        return Err(Error::RankDeficient { condition });
    }

    // Back substitution on the leading n×n block; r[j][i] is R(i, j).
    let mut solution = Matrix::zeros(n, b.cols());
    let mut x = vec![T::zero(); n];
    for (c, rhs) in qtb.iter().enumerate() {
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for j in (i + 1)..n {
                s -= r[j][i] * x[j];
            }
            x[i] = s / r[i][i];
        }
        for (k, &orig) in perm.iter().enumerate() {
            solution[(orig, c)] = x[k];
        }
    }
    Ok(LeastSquares { solution, condition })
}

/// Solves `min ‖A X − B‖² + w² ‖X‖²` by QR on the stacked system
/// `[A; w I] X ≈ [B; 0]`.
pub fn ridge_least_squares<T: Real>(a: &Matrix<T>, b: &Matrix<T>, weight: T) -> Result<LeastSquares<T>> {
    let (m, n) = a.shape();
    let mut stacked = Matrix::zeros(m + n, n);
    let mut rhs = Matrix::zeros(m + n, b.cols());
    for i in 0..m {
        for j in 0..n {
            stacked[(i, j)] = a[(i, j)];
        }
        for j in 0..b.cols() {
            rhs[(i, j)] = b[(i, j)];
        }
    }
    for j in 0..n {
        stacked[(m + j, j)] = weight;
    }
    // Any positive weight makes the stacked system full rank; only an exact
    // zero pivot is fatal here.
    least_squares(&stacked, &rhs, T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_transpose() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let at = a.transpose();
        let g = &at * &a;
        assert_eq!(g.as_slice(), &[35.0, 44.0, 44.0, 56.0]);
        assert_eq!(a.mul_vec(&[1.0, -1.0]), vec![-1.0, -1.0, -1.0]);
        assert_eq!(a.tr_mul_vec(&[1.0, 0.0, 1.0]), vec![6.0, 8.0]);
    }

    #[test]
    fn exact_line_fit() {
        // θ = 1 + 2 z through (0,1), (1,3), (2,5).
        let a = Matrix::from_rows(&[vec![1.0f64, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![3.0], vec![5.0]]).unwrap();
        let ls = least_squares(&a, &b, default_rank_tolerance(3, 2)).unwrap();
        assert!((ls.solution[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((ls.solution[(1, 0)] - 2.0).abs() < 1e-12);
        assert!(ls.condition.is_finite() && ls.condition >= 1.0);
    }

    #[test]
    fn pivoting_recovers_permuted_columns() {
        let a = Matrix::from_rows(&[
            vec![1e-3f64, 1.0, 10.0],
            vec![2e-3, 1.0, -3.0],
            vec![-1e-3, 1.0, 4.0],
            vec![5e-3, 1.0, 1.0],
        ])
        .unwrap();
        let beta = [3.0, -1.0, 0.5];
        let b = Matrix::from_row_major(4, 1, a.mul_vec(&beta)).unwrap();
        let ls = least_squares(&a, &b, default_rank_tolerance(4, 3)).unwrap();
        for (k, &bk) in beta.iter().enumerate() {
            assert!((ls.solution[(k, 0)] - bk).abs() < 1e-9, "{k}: {}", ls.solution[(k, 0)]);
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        match least_squares(&a, &b, default_rank_tolerance(3, 2)) {
            Err(Error::RankDeficient { condition }) => assert!(condition > 1e10),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        let wide = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let rhs = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(least_squares(&wide, &rhs, 0.0).is_err());
    }

    #[test]
    fn ridge_rescues_singular_problem() {
        let a = Matrix::from_rows(&[vec![1.0f64, 0.0], vec![1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![2.0], vec![2.0]]).unwrap();
        let ls = ridge_least_squares(&a, &b, 1e-6).unwrap();
        assert!((ls.solution[(0, 0)] - 2.0).abs() < 1e-9);
        assert_eq!(ls.solution[(1, 0)], 0.0);
    }

    #[test]
    fn jacobi_eigenvalues() {
        let a = Matrix::from_rows(&[vec![2.0f64, 1.0, 0.0], vec![1.0, 2.0, 0.0], vec![0.0, 0.0, 5.0]]).unwrap();
        let ev = a.symmetric_eigenvalues();
        for (got, want) in ev.iter().zip([1.0, 3.0, 5.0]) {
            assert!((got - want).abs() < 1e-12, "{ev:?}");
        }
        let d = Matrix::from_diagonal(&[3.0, -1.0]);
        assert_eq!(d.symmetric_eigenvalues(), vec![-1.0, 3.0]);
    }

    #[test]
    fn symmetrize_and_asymmetry() {
        let mut a = Matrix::from_rows(&[vec![1.0, 2.0], vec![4.0, 1.0]]).unwrap();
        assert!(a.asymmetry() > 0.0);
        a.symmetrize();
        assert_eq!(a.asymmetry(), 0.0);
        assert_eq!(a[(0, 1)], 3.0);
    }
}
