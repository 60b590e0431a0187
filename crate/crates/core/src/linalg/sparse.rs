use crate::error::{Error, Result};

/// Compressed sparse column matrix with sorted row indices per column.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Builds from triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, v) in &t {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidInput(format!(
                    "entry ({i}, {j}) outside a {nrows}x{ncols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("entry ({i}, {j}) is not finite")));
            }
        }
        t.sort_unstable_by_key(|&(i, j, _)| (j, i));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowidx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            colptr[j + 1] += 1;
            rowidx.push(i);
            values.push(v);
        }
        for j in 0..ncols {
            colptr[j + 1] += colptr[j];
        }
        Ok(Self {
            nrows,
            ncols,
            colptr,
            rowidx,
            values,
        })
    }

    /// Sorted CSC layout of `(row, col, payload)` entries (no duplicates);
    /// values start at zero.
    pub(crate) fn pattern_with<T: Copy>(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, T)>) -> (Self, Vec<T>) {
        t.sort_unstable_by_key(|e| (e.1, e.0));
        let mut colptr = vec![0usize; ncols + 1];
        for e in &t {
            colptr[e.1 + 1] += 1;
        }
        for j in 0..ncols {
            colptr[j + 1] += colptr[j];
        }
        let rowidx = t.iter().map(|e| e.0).collect();
        let payload = t.iter().map(|e| e.2).collect();
        let values = vec![0.0; t.len()];
        (Self::from_parts(nrows, ncols, colptr, rowidx, values), payload)
    }

    pub(crate) fn from_parts(
        nrows: usize,
        ncols: usize,
        colptr: Vec<usize>,
        rowidx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(colptr.len(), ncols + 1);
        debug_assert_eq!(rowidx.len(), values.len());
        Self {
            nrows,
            ncols,
            colptr,
            rowidx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn colptr(&self) -> &[usize] {
        &self.colptr
    }

    pub fn rowidx(&self) -> &[usize] {
        &self.rowidx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `(row, value)` pairs of column `j`.
    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.colptr[j]..self.colptr[j + 1];
        self.rowidx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.colptr[j]..self.colptr[j + 1];
        match self.rowidx[r.clone()].binary_search(&i) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| self.col(j).map(move |(i, v)| (i, j, v)))
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (i, v) in self.col(j) {
                    y[i] += v * xj;
                }
            }
        }
        y
    }

    /// `y = A^T x`.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        (0..self.ncols)
            .map(|j| self.col(j).map(|(i, v)| v * x[i]).sum())
            .collect()
    }

    /// Rows `r0..r1` and columns `c0..c1`, reindexed from zero.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> CscMatrix {
        let mut colptr = Vec::with_capacity(c1 - c0 + 1);
        let mut rowidx = Vec::new();
        let mut values = Vec::new();
        colptr.push(0);
        for j in c0..c1 {
            for (i, v) in self.col(j) {
                if i >= r0 && i < r1 {
                    rowidx.push(i - r0);
                    values.push(v);
                }
            }
            colptr.push(rowidx.len());
        }
        CscMatrix::from_parts(r1 - r0, c1 - c0, colptr, rowidx, values)
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut t: Vec<(usize, usize, f64)> = self.iter().map(|(i, j, v)| (j, i, v)).collect();
        t.sort_unstable_by_key(|&(i, j, _)| (j, i));
        let mut colptr = vec![0usize; self.nrows + 1];
        for &(_, j, _) in &t {
            colptr[j + 1] += 1;
        }
        for j in 0..self.nrows {
            colptr[j + 1] += colptr[j];
        }
        let rowidx = t.iter().map(|e| e.0).collect();
        let values = t.iter().map(|e| e.2).collect();
        CscMatrix::from_parts(self.ncols, self.nrows, colptr, rowidx, values)
    }
}

/// Square symmetric matrix with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    inner: CscMatrix,
}

impl SparseSymMatrix {
    /// From triplets that already contain both `(i, j)` and `(j, i)`.
    pub fn from_full_triplets(n: usize, t: Vec<(usize, usize, f64)>) -> Result<Self> {
        let inner = CscMatrix::from_triplets(n, n, t)?;
        let m = Self { inner };
        m.check_symmetric()?;
        Ok(m)
    }

    /// From lower-or-upper triplets; off-diagonal entries are mirrored.
    pub fn from_triangle_triplets(n: usize, t: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut full = Vec::with_capacity(2 * t.len());
        for (i, j, v) in t {
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
        Ok(Self {
            inner: CscMatrix::from_triplets(n, n, full)?,
        })
    }

    /// Caller guarantees the pattern and values are symmetric.
    pub(crate) fn from_csc_unchecked(inner: CscMatrix) -> Self {
        debug_assert_eq!(inner.nrows, inner.ncols);
        Self { inner }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        self.inner.values_mut()
    }

    fn check_symmetric(&self) -> Result<()> {
        for (i, j, v) in self.inner.iter() {
            if i < j && self.inner.get(j, i) != v {
                return Err(Error::InvalidInput(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.inner.nrows
    }

    pub fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner.get(i, j)
    }

    pub fn csc(&self) -> &CscMatrix {
        &self.inner
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.inner.iter()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.inner.matvec(x)
    }

    /// `x^T A x`.
    pub fn quadform(&self, x: &[f64]) -> f64 {
        let y = self.matvec(x);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    /// Rectangular block in the stored (symmetric) index space.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> CscMatrix {
        self.inner.block(r0, r1, c0, c1)
    }

    /// The principal block of indices `r0..r1`.
    pub fn principal(&self, r0: usize, r1: usize) -> SparseSymMatrix {
        SparseSymMatrix {
            inner: self.inner.block(r0, r1, r0, r1),
        }
    }

    /// `c I + s A` with the same pattern plus a full diagonal.
    pub fn shifted(&self, c: f64, s: f64) -> SparseSymMatrix {
        let n = self.n();
        let mut t: Vec<(usize, usize, f64)> = self.iter().map(|(i, j, v)| (i, j, s * v)).collect();
        t.extend((0..n).map(|i| (i, i, c)));
        SparseSymMatrix {
            inner: CscMatrix::from_triplets(n, n, t).expect("shift of a valid matrix"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a = CscMatrix::from_triplets(3, 2, vec![(2, 0, 1.0), (0, 0, 2.0), (2, 0, 0.5), (1, 1, -1.0)]).unwrap();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(2, 0), 1.5);
        assert_eq!(a.get(0, 0), 2.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.matvec(&[1.0, 2.0]), vec![2.0, -2.0, 1.5]);
        assert_eq!(a.matvec_t(&[1.0, 1.0, 1.0]), vec![3.5, -1.0]);
        let t = a.transpose();
        assert_eq!(t.get(0, 2), 1.5);
        assert_eq!(t.nrows(), 2);
    }

    #[test]
    fn blocks_and_shift() {
        let s = SparseSymMatrix::from_triangle_triplets(3, vec![(0, 0, 4.0), (1, 0, -1.0), (2, 2, 3.0), (2, 1, 0.5)])
            .unwrap();
        assert_eq!(s.get(0, 1), -1.0);
        let b = s.block(1, 3, 0, 1);
        assert_eq!(b.get(0, 0), -1.0);
        assert_eq!(b.nrows(), 2);
        let p = s.principal(1, 3);
        assert_eq!(p.get(1, 0), 0.5);
        let sh = s.shifted(1.0, 2.0);
        assert_eq!(sh.get(1, 1), 1.0);
        assert_eq!(sh.get(0, 0), 9.0);
        assert!((s.quadform(&[1.0, 1.0, 1.0]) - (4.0 - 2.0 + 3.0 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_rejected() {
        assert!(SparseSymMatrix::from_full_triplets(2, vec![(0, 1, 1.0)]).is_err());
    }
}
