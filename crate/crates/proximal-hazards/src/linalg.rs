//! Minimal dense linear algebra for the estimators.
//!
//! Every linear system in this crate is small (Gram matrices of regression
//! designs and stacked estimating-equation blocks), so simple dense
//! factorizations suffice:
//!
//! - a pivoted Cholesky for symmetric positive semidefinite systems, which is
//!   rank-revealing and therefore able to name the dependent columns of a
//!   singular design;
//! - LU with partial pivoting for general square systems;
//! - cyclic Jacobi sweeps for symmetric eigenvalues.
//!
//! All routines are generic over [`Scalar`].

use crate::error::{Error, Result};
use crate::scalar::{from_usize, Scalar};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    /// Build from per-row slices; all rows must share a length.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Mat {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    /// Build an `n x cols.len()` matrix from column vectors of length `n`.
    pub fn from_columns(n: usize, cols: &[Vec<T>]) -> Self {
        assert!(cols.iter().all(|c| c.len() == n), "column length mismatch");
        let mut m = Mat::zeros(n, cols.len());
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
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
    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] += v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.add_to(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|i| dot(self.row(i), v))
            .collect()
    }

    /// `self += w * a * b^T`.
    pub fn add_outer(&mut self, a: &[T], b: &[T], w: T) {
        assert_eq!(a.len(), self.rows);
        assert_eq!(b.len(), self.cols);
        for (i, &ai) in a.iter().enumerate() {
            let wa = w * ai;
            let row = self.row_mut(i);
            for (j, &bj) in b.iter().enumerate() {
                row[j] += wa * bj;
            }
        }
    }

    pub fn scale(&mut self, w: T) {
        for v in &mut self.data {
            *v *= w;
        }
    }

    pub fn add_assign(&mut self, other: &Mat<T>) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    /// `X^T X` of an `n x p` matrix, accumulated symmetrically.
    pub fn gram(&self) -> Mat<T> {
        let mut g = Mat::zeros(self.cols, self.cols);
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..self.cols {
                for b in a..self.cols {
                    g.add_to(a, b, r[a] * r[b]);
                }
            }
        }
        for a in 0..self.cols {
            for b in 0..a {
                let v = g.get(b, a);
                g.set(a, b, v);
            }
        }
        g
    }

    /// `sum_i w_i x_i x_i^T` for row vectors `x_i` of `self`.
    pub fn weighted_gram(&self, w: &[T]) -> Mat<T> {
        assert_eq!(w.len(), self.rows);
        let mut g = Mat::zeros(self.cols, self.cols);
        for i in 0..self.rows {
            let r = self.row(i);
            let wi = w[i];
            for a in 0..self.cols {
                let wa = wi * r[a];
                for b in a..self.cols {
                    g.add_to(a, b, wa * r[b]);
                }
            }
        }
        for a in 0..self.cols {
            for b in 0..a {
                let v = g.get(b, a);
                g.set(a, b, v);
            }
        }
        g
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Outcome of the rank-revealing pivoted Cholesky factorization.
pub enum SpdFactor<T> {
    Full(SpdChol<T>),
    /// Factorization stopped early; `dependent` holds the unpivoted
    /// (linearly dependent) column indices of the original matrix.
    RankDeficient { rank: usize, dependent: Vec<usize> },
}

/// Cholesky factorization `P^T A P = L L^T` of a symmetric PSD matrix.
pub struct SpdChol<T> {
    l: Mat<T>,
    piv: Vec<usize>,
}

/// Pivoted Cholesky with diagonal pivoting. A column is declared dependent
/// when its remaining diagonal falls at or below `rel_tol` times the largest
/// initial diagonal.
pub fn spd_factor<T: Scalar>(m: &Mat<T>, rel_tol: T) -> SpdFactor<T> {
    assert!(m.is_square(), "spd_factor requires a square matrix");
    let n = m.rows();
    let mut a = m.clone();
    let mut piv: Vec<usize> = (0..n).collect();

    let max_diag = (0..n).fold(T::zero(), |acc, i| acc.max(a.get(i, i)));
    let tol = rel_tol * max_diag;

    for k in 0..n {
        let (jmax, dmax) = (k..n)
            .map(|j| (j, a.get(j, j)))
            .fold((k, a.get(k, k)), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        if !(dmax > tol) || !dmax.is_finite() {
            return SpdFactor::RankDeficient {
                rank: k,
                dependent: piv[k..].to_vec(),
            };
        }
        if jmax != k {
            for j in 0..n {
                let tmp = a.get(k, j);
                a.set(k, j, a.get(jmax, j));
                a.set(jmax, j, tmp);
            }
            for i in 0..n {
                let tmp = a.get(i, k);
                a.set(i, k, a.get(i, jmax));
                a.set(i, jmax, tmp);
            }
            piv.swap(k, jmax);
        }
        let lkk = dmax.sqrt();
        a.set(k, k, lkk);
        for i in k + 1..n {
            let v = a.get(i, k) / lkk;
            a.set(i, k, v);
        }
        // full square trailing update; the active block must stay symmetric
        // because later pivots permute whole rows and columns of it
        for j in k + 1..n {
            let ljk = a.get(j, k);
            for i in k + 1..n {
                let v = a.get(i, j) - a.get(i, k) * ljk;
                a.set(i, j, v);
            }
        }
    }
    SpdFactor::Full(SpdChol { l: a, piv })
}

impl<T: Scalar> SpdChol<T> {
    /// Solve `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows();
        assert_eq!(b.len(), n);
        // permute
        let mut y: Vec<T> = (0..n).map(|k| b[self.piv[k]]).collect();
        // forward: L y' = y
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.l.get(i, j) * y[j];
            }
            y[i] = s / self.l.get(i, i);
        }
        // backward: L^T z = y'
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.l.get(j, i) * y[j];
            }
            y[i] = s / self.l.get(i, i);
        }
        // unpermute
        let mut x = vec![T::zero(); n];
        for k in 0..n {
            x[self.piv[k]] = y[k];
        }
        x
    }
}

/// Solve a symmetric PSD system, reporting dependent columns on rank
/// deficiency via the supplied column names. One step of iterative
/// refinement tightens the residual.
pub fn solve_spd<T: Scalar>(
    m: &Mat<T>,
    b: &[T],
    rel_tol: T,
    column_names: &[String],
) -> Result<Vec<T>> {
    match spd_factor(m, rel_tol) {
        SpdFactor::RankDeficient { dependent, .. } => {
            let columns = dependent
                .iter()
                .map(|&j| {
                    column_names
                        .get(j)
                        .cloned()
                        .unwrap_or_else(|| format!("column {j}"))
                })
                .collect();
            Err(Error::SingularDesign { columns })
        }
        SpdFactor::Full(chol) => {
            let mut x = chol.solve(b);
            // one refinement pass
            let mut r = b.to_vec();
            let mx = m.mul_vec(&x);
            for (ri, mi) in r.iter_mut().zip(&mx) {
                *ri -= *mi;
            }
            let dx = chol.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += *di;
            }
            Ok(x)
        }
    }
}

/// LU factorization with partial pivoting.
pub struct Lu<T> {
    lu: Mat<T>,
    piv: Vec<usize>,
}

pub fn lu_factor<T: Scalar>(m: &Mat<T>) -> Result<Lu<T>> {
    assert!(m.is_square(), "lu_factor requires a square matrix");
    let n = m.rows();
    let mut a = m.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    let tiny = T::epsilon() * from_usize::<T>(n.max(1)) * m.max_abs();

    for k in 0..n {
        let (imax, vmax) = (k..n)
            .map(|i| (i, a.get(i, k).abs()))
            .fold((k, a.get(k, k).abs()), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        if !(vmax > tiny) || !vmax.is_finite() {
            return Err(Error::Numerical(format!(
                "singular matrix in LU factorization at pivot {k}"
            )));
        }
        if imax != k {
            for j in 0..n {
                let tmp = a.get(k, j);
                a.set(k, j, a.get(imax, j));
                a.set(imax, j, tmp);
            }
            piv.swap(k, imax);
        }
        let pivot = a.get(k, k);
        for i in k + 1..n {
            let lik = a.get(i, k) / pivot;
            a.set(i, k, lik);
            for j in k + 1..n {
                let v = a.get(i, j) - lik * a.get(k, j);
                a.set(i, j, v);
            }
        }
    }
    Ok(Lu { lu: a, piv })
}

impl<T: Scalar> Lu<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = (0..n).map(|k| b[self.piv[k]]).collect();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lu.get(i, j) * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.lu.get(i, j) * y[j];
            }
            y[i] = s / self.lu.get(i, i);
        }
        y
    }

    pub fn inverse(&self) -> Mat<T> {
        let n = self.lu.rows();
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
            e[j] = T::zero();
        }
        inv
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi sweeps, ascending.
pub fn symmetric_eigenvalues<T: Scalar>(m: &Mat<T>) -> Vec<T> {
    assert!(m.is_square());
    let n = m.rows();
    if n == 0 {
        return Vec::new();
    }
    let mut a = m.clone();
    let half = T::one() / (T::one() + T::one());
    let max_sweeps = 50;
    for _ in 0..max_sweeps {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        let frob: T = (0..n)
            .map(|i| (0..n).map(|j| a.get(i, j) * a.get(i, j)).sum::<T>())
            .sum();
        if off <= T::epsilon() * T::epsilon() * frob.max(T::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = half * (aqq - app) / apq;
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (T::one() + theta * theta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| a.get(i, i)).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("non-finite eigenvalue"));
    eig
}

/// Sample covariance (denominator `rows - 1`) of the rows of `x`.
pub fn sample_covariance<T: Scalar>(x: &Mat<T>) -> Mat<T> {
    let n = x.rows();
    assert!(n >= 2, "sample covariance needs at least two rows");
    let p = x.cols();
    let inv_n = T::one() / from_usize::<T>(n);
    let mut mean = vec![T::zero(); p];
    for i in 0..n {
        axpy(&mut mean, inv_n, x.row(i));
    }
    let mut cov = Mat::zeros(p, p);
    let mut centered = vec![T::zero(); p];
    for i in 0..n {
        for (c, (&v, &m)) in centered.iter_mut().zip(x.row(i).iter().zip(&mean)) {
            *c = v - m;
        }
        cov.add_outer(&centered, &centered, T::one());
    }
    cov.scale(T::one() / from_usize::<T>(n - 1));
    cov
}

impl<T> Mat<T> {
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}
