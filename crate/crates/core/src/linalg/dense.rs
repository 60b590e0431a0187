use std::sync::atomic::{AtomicUsize, Ordering};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt;
use faer::linalg::triangular_solve;
use faer::{MatMut, MatRef, Par};

use crate::error::{Error, Result};

static LIVE_MAX: AtomicUsize = AtomicUsize::new(0);

/// Largest element count of any [`DenseMatrix`] allocated since the last
/// [`reset_dense_alloc_peak`].
pub fn dense_alloc_peak() -> usize {
    LIVE_MAX.load(Ordering::Relaxed)
}

pub fn reset_dense_alloc_peak() {
    LIVE_MAX.store(0, Ordering::Relaxed);
}

fn record(elems: usize) {
    LIVE_MAX.fetch_max(elems, Ordering::Relaxed);
}

/// Row-major `rows x cols` matrix.
#[derive(Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Clone for DenseMatrix {
    fn clone(&self) -> Self {
        record(self.data.len());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.clone(),
        }
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        record(rows * cols);
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        record(rows * cols);
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        record(data.len());
        Ok(Self { rows, cols, data })
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

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// Replaces the matrix by `(A + A^T) / 2`.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    /// Largest `|A_ij - A_ji|` relative to the largest `|A_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.rows;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn add_diagonal(&mut self, c: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += c;
        }
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

/// Dense Cholesky factor `A = L L^T`, computed with blocked kernels.
/// `L` is kept column-major (so the buffer read row-major is `L^T`).
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    l: DenseMatrix,
}

fn col_major(data: &[f64], n: usize) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(data, n, n)
}

impl DenseCholesky {
    /// Factors the symmetric matrix `a`.
    pub fn new(a: &DenseMatrix, what: &'static str) -> Result<Self> {
        Self::factor_in_place(a.clone(), what)
    }

    pub fn factor_in_place(mut a: DenseMatrix, what: &'static str) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::InvalidInput(format!("{what}: matrix is not square")));
        }
        let n = a.rows;
        let diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
        let par = faer::get_global_parallelism();
        // symmetric, so the row-major buffer read column-major is `a` itself
        let res = {
            let mut buf = MemBuffer::new(llt::factor::cholesky_in_place_scratch::<f64>(n, par, Default::default()));
            llt::factor::cholesky_in_place(
                MatMut::from_column_major_slice_mut(&mut a.data, n, n),
                Default::default(),
                par,
                MemStack::new(&mut buf),
                Default::default(),
            )
        };
        match res {
            Ok(_) => {
                for j in 0..n {
                    a.data[j * n..j * n + j].iter_mut().for_each(|v| *v = 0.0);
                }
                Ok(Self { l: a })
            }
            Err(llt::factor::LltError::NonPositivePivot { index }) => {
                // only the lower triangle and diagonal were overwritten
                for j in 0..n {
                    a.data[j * n + j] = diag[j];
                    for i in j + 1..n {
                        a.data[j * n + i] = a.data[i * n + j];
                    }
                }
                Err(pivot_failure(a, what).unwrap_or_else(|| Error::NotPositiveDefinite {
                    what,
                    pivot: index,
                    value: f64::NAN,
                    diagnostic: format!("dimension {n}, rejected by the blocked factorization"),
                }))
            }
        }
    }

    fn view(&self) -> MatRef<'_, f64> {
        col_major(&self.l.data, self.dim())
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l.get(i, i).ln()).sum::<f64>()
    }

    /// Estimated reciprocal condition number from the factor diagonal.
    pub fn rcond_estimate(&self) -> f64 {
        let (lo, hi) = (0..self.dim()).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
            let d = self.l.get(i, i);
            (lo.min(d), hi.max(d))
        });
        (lo / hi).powi(2)
    }

    /// `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        triangular_solve::solve_lower_triangular_in_place(
            self.view(),
            MatMut::from_column_major_slice_mut(b, n, 1),
            Par::Seq,
        );
    }

    /// `L^T x = y` in place.
    pub fn backward(&self, b: &mut [f64]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        triangular_solve::solve_upper_triangular_in_place(
            self.view().transpose(),
            MatMut::from_column_major_slice_mut(b, n, 1),
            Par::Seq,
        );
    }

    /// `L Y = B` in place for a row-major `n x k` right-hand side.
    pub fn forward_block(&self, b: &mut [f64], k: usize) {
        let n = self.dim();
        assert_eq!(b.len(), n * k);
        triangular_solve::solve_lower_triangular_in_place(
            self.view(),
            MatMut::from_row_major_slice_mut(b, n, k),
            faer::get_global_parallelism(),
        );
    }

    /// `L^T X = Y` in place for a row-major `n x k` right-hand side.
    pub fn backward_block(&self, b: &mut [f64], k: usize) {
        let n = self.dim();
        assert_eq!(b.len(), n * k);
        triangular_solve::solve_upper_triangular_in_place(
            self.view().transpose(),
            MatMut::from_row_major_slice_mut(b, n, k),
            faer::get_global_parallelism(),
        );
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// `b^T A^-1 b` via one forward substitution.
    pub fn quadform(&self, b: &[f64]) -> f64 {
        let mut y = b.to_vec();
        self.forward(&mut y);
        dot(&y, &y)
    }

    /// `A^-1`, symmetric.
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.dim();
        let par = faer::get_global_parallelism();
        let mut inv = DenseMatrix::zeros(n, n);
        // workspace holds `L^-1`
        record(n * n);
        let mut buf = MemBuffer::new(llt::inverse::inverse_scratch::<f64>(n, par));
        llt::inverse::inverse(
            MatMut::from_column_major_slice_mut(&mut inv.data, n, n),
            self.view(),
            par,
            MemStack::new(&mut buf),
        );
        drop(buf);
        // lower triangle (column-major) is filled; mirror it
        for j in 0..n {
            for i in j + 1..n {
                inv.data[i * n + j] = inv.data[j * n + i];
            }
        }
        inv
    }
}

/// Scalar row-by-row factorization, used only to describe a failure: the
/// offending pivot and its value. `None` if it happens to succeed.
fn pivot_failure(mut a: DenseMatrix, what: &'static str) -> Option<Error> {
    let n = a.rows;
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a.get(i, i).abs()));
    let mut min_pivot = f64::INFINITY;
    for i in 0..n {
        let (head, tail) = a.data.split_at_mut(i * n);
        let row_i = &mut tail[..n];
        for j in 0..i {
            let row_j = &head[j * n..j * n + j + 1];
            let s = row_i[j] - dot(&row_i[..j], &row_j[..j]);
            row_i[j] = s / row_j[j];
        }
        let d = row_i[i] - dot(&row_i[..i], &row_i[..i]);
        if !(d > 0.0) || !d.is_finite() {
            return Some(Error::NotPositiveDefinite {
                what,
                pivot: i,
                value: d,
                diagnostic: format!(
                    "dimension {n}, largest diagonal {max_diag:e}, smallest accepted pivot {:e}",
                    if min_pivot.is_finite() { min_pivot } else { f64::NAN }
                ),
            });
        }
        min_pivot = min_pivot.min(d);
        row_i[i] = d.sqrt();
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DenseMatrix {
        let b = DenseMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
        let mut a = DenseMatrix::from_fn(n, n, |i, j| dot(b.row(i), b.row(j)));
        a.add_diagonal(0.5);
        a
    }

    #[test]
    fn factor_solve_inverse() {
        let a = spd(9);
        let ch = DenseCholesky::new(&a, "test").unwrap();
        let x: Vec<f64> = (0..9).map(|k| k as f64 - 3.0).collect();
        let b = a.matvec(&x);
        let y = ch.solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-10);
        }
        let inv = ch.inverse();
        for i in 0..9 {
            for j in 0..9 {
                let e: f64 = (0..9).map(|k| a.get(i, k) * inv.get(k, j)).sum();
                assert!((e - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
        assert!((ch.quadform(&b) - dot(&b, &y)).abs() < 1e-9 * dot(&b, &y));
    }

    #[test]
    fn logdet_of_diagonal() {
        let a = DenseMatrix::from_fn(3, 3, |i, j| if i == j { (i + 2) as f64 } else { 0.0 });
        let ch = DenseCholesky::new(&a, "d").unwrap();
        assert!((ch.logdet() - (24.0f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn indefinite_is_reported() {
        let a = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        match DenseCholesky::new(&a, "X") {
            Err(Error::NotPositiveDefinite { what, pivot, .. }) => {
                assert_eq!(what, "X");
                assert_eq!(pivot, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn peak_tracks_allocations() {
        let _m = DenseMatrix::zeros(3, 4);
        assert!(dense_alloc_peak() >= 12);
    }
}
