//! Sparse precision blocks from a stencil, the dense corner block and the
//! approximate precisions used for comparison likelihoods.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{GridMask, PartitionIndex};
use crate::linalg::{CscMatrix, DenseMatrix, SparseCholesky, SparseSymMatrix};
use crate::spectral::{Lag, Stencil};

/// Approximate precision used in place of the exact one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Stencil entries between every observed pair, no boundary handling.
    None,
    /// Diagonal of partially neighbored rows rescaled to keep dominance.
    Precision,
    /// Entries at the wrapped lag of a complete torus.
    Periodic,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::Precision => "precision",
            Scheme::Periodic => "periodic",
        }
    }
}

fn check_index(mask: &GridMask, index: &PartitionIndex) -> Result<()> {
    if mask.n_obs() != index.n_obs() {
        return Err(Error::IndexMismatch);
    }
    Ok(())
}

fn neighbor(mask: &GridMask, cell: (usize, usize), h: Lag) -> Option<usize> {
    mask.obs_index(cell.0 as i64 + h.0 as i64, cell.1 as i64 + h.1 as i64)
}

/// `Q[i, j] = eta(x_i - x_j)` over observation indices whenever `i` or `j`
/// is fully neighbored. Pairs of partially neighbored observations are left
/// out.
pub fn assemble_sparse_q(mask: &GridMask, index: &PartitionIndex, stencil: &Stencil) -> Result<SparseSymMatrix> {
    check_index(mask, index)?;
    let cells = mask.cells();
    let mut t = Vec::new();
    for &j in index.full() {
        for (h, v) in stencil.iter() {
            let i = neighbor(mask, cells[j], h).ok_or(Error::IndexMismatch)?;
            t.push((i, j, v));
            if !index.is_fully(i) {
                t.push((j, i, v));
            }
        }
    }
    SparseSymMatrix::from_full_triplets(mask.n_obs(), t)
}

/// Sparsity layout of the blocked precision `P Q P^T` with the lag behind
/// each stored entry, so new stencil values of the same support only refill
/// values.
#[derive(Debug, Clone)]
pub struct PrecisionLayout {
    m: usize,
    q22: SparseSymMatrix,
    q22_lags: Vec<Lag>,
    q12: CscMatrix,
    q12_lags: Vec<Lag>,
}

impl PrecisionLayout {
    pub fn new(mask: &GridMask, index: &PartitionIndex, stencil: &Stencil) -> Result<Self> {
        check_index(mask, index)?;
        let m = index.m_n();
        let n2 = index.n_fully();
        let cells = mask.cells();
        let perm = index.perm();
        let mut t22 = Vec::new();
        let mut t12 = Vec::new();
        for &j in index.full() {
            let pj = perm[j] - m;
            for (h, _) in stencil.iter() {
                let i = neighbor(mask, cells[j], h).ok_or(Error::IndexMismatch)?;
                let pi = perm[i];
                if pi >= m {
                    t22.push((pi - m, pj, h));
                } else {
                    t12.push((pi, pj, h));
                }
            }
        }
        let (q22, q22_lags) = CscMatrix::pattern_with(n2, n2, t22);
        let (q12, q12_lags) = CscMatrix::pattern_with(m, n2, t12);
        Ok(Self {
            m,
            q22: SparseSymMatrix::from_csc_unchecked(q22),
            q22_lags,
            q12,
            q12_lags,
        })
    }

    pub fn m_n(&self) -> usize {
        self.m
    }

    pub fn n_fully(&self) -> usize {
        self.q22.n()
    }

    /// Fully/fully block.
    pub fn q22(&self, stencil: &Stencil) -> SparseSymMatrix {
        let mut q = self.q22.clone();
        for (v, &h) in q.values_mut().iter_mut().zip(&self.q22_lags) {
            *v = stencil.get(h);
        }
        q
    }

    /// Partial/fully block (`m_n x (n - m_n)`).
    pub fn q12(&self, stencil: &Stencil) -> CscMatrix {
        let mut q = self.q12.clone();
        for (v, &h) in q.values_mut().iter_mut().zip(&self.q12_lags) {
            *v = stencil.get(h);
        }
        q
    }

    /// Pattern of the full blocked precision with a dense corner block.
    pub fn full_pattern(&self) -> FullPattern {
        let m = self.m;
        let n2 = self.q22.n();
        let n = m + n2;
        // rows of Q12 with their lags, i.e. columns of Q21
        let mut q21: Vec<Vec<(usize, Lag)>> = vec![Vec::new(); m];
        for (k, (i, j, _)) in self.q12.iter().enumerate() {
            q21[i].push((j, self.q12_lags[k]));
        }
        let nnz = m * m + 2 * self.q12.nnz() + self.q22.nnz();
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowidx = Vec::with_capacity(nnz);
        let mut lags = Vec::with_capacity(nnz - m * m);
        colptr.push(0);
        for col in &q21 {
            rowidx.extend(0..m);
            for &(j, h) in col {
                rowidx.push(j + m);
                lags.push(h);
            }
            colptr.push(rowidx.len());
        }
        let (c12, c22) = (self.q12.colptr(), self.q22.csc().colptr());
        for j in 0..n2 {
            for p in c12[j]..c12[j + 1] {
                rowidx.push(self.q12.rowidx()[p]);
                lags.push(self.q12_lags[p]);
            }
            for p in c22[j]..c22[j + 1] {
                rowidx.push(self.q22.csc().rowidx()[p] + m);
                lags.push(self.q22_lags[p]);
            }
            colptr.push(rowidx.len());
        }
        let values = vec![0.0; rowidx.len()];
        FullPattern {
            matrix: SparseSymMatrix::from_csc_unchecked(CscMatrix::from_parts(n, n, colptr, rowidx, values)),
            m,
            lags,
        }
    }
}

/// Layout of the full blocked precision (dense `Q11` stored as sparse: the
/// first `m` entries of each of the first `m` columns).
#[derive(Debug, Clone)]
pub struct FullPattern {
    matrix: SparseSymMatrix,
    m: usize,
    // lag behind every other stored entry, in storage order
    lags: Vec<Lag>,
}

impl FullPattern {
    pub fn fill(&self, q11: &DenseMatrix, stencil: &Stencil) -> SparseSymMatrix {
        let m = self.m;
        let mut q = self.matrix.clone();
        let colptr = q.csc().colptr().to_vec();
        let vals = q.values_mut();
        let mut lags = self.lags.iter();
        for j in 0..colptr.len() - 1 {
            let mut p = colptr[j];
            if j < m {
                // symmetric: column j is row j
                vals[p..p + m].copy_from_slice(q11.row(j));
                p += m;
            }
            for v in &mut vals[p..colptr[j + 1]] {
                *v = stencil.get(*lags.next().expect("lag per sparse entry"));
            }
        }
        q
    }

    pub fn pattern(&self) -> &SparseSymMatrix {
        &self.matrix
    }
}

/// Columns per batch so that an `n2 x B` block never exceeds `m x m`.
fn batch_size(m: usize, n2: usize) -> usize {
    if n2 == 0 {
        return 32;
    }
    (m * m / n2).clamp(1, 32)
}

/// `sum_k c_k P A_k^-1 P^T` for a sparse `m x n2` matrix `P`, computed in
/// batches of columns of `P^T`; the `n2 x m` solve matrix is never formed.
/// Each output column is produced independently, so the result does not
/// depend on the number of workers.
pub fn sandwich(p: &CscMatrix, terms: &[(f64, &SparseCholesky)], workers: usize) -> Result<DenseMatrix> {
    let m = p.nrows();
    let n2 = p.ncols();
    for (_, f) in terms {
        if f.n() != n2 {
            return Err(Error::LengthMismatch {
                expected: n2,
                got: f.n(),
            });
        }
    }
    let mut out = DenseMatrix::zeros(m, m);
    if m == 0 || n2 == 0 || terms.is_empty() {
        return Ok(out);
    }
    let pt = p.transpose();
    let b = batch_size(m, n2);
    let run = |(batch, rows): (usize, &mut [f64])| {
        let c0 = batch * b;
        let w = rows.len() / m;
        let mut rhs = DenseMatrix::zeros(n2, w);
        for c in 0..w {
            for (r, v) in pt.col(c0 + c) {
                rhs.set(r, c, v);
            }
        }
        let mut z = DenseMatrix::zeros(n2, w);
        for &(coef, f) in terms {
            let mut x = rhs.clone();
            f.solve_block(x.as_mut_slice(), w);
            for (zz, xx) in z.as_mut_slice().iter_mut().zip(x.as_slice()) {
                *zz += coef * xx;
            }
        }
        // row c of the (symmetric) output is column c
        for j in 0..n2 {
            let zj = z.row(j);
            for (i, v) in p.col(j) {
                for c in 0..w {
                    rows[c * m + i] += v * zj[c];
                }
            }
        }
    };
    if workers == 1 {
        out.as_mut_slice().chunks_mut(b * m).enumerate().for_each(run);
    } else {
        let par = |out: &mut DenseMatrix| out.as_mut_slice().par_chunks_mut(b * m).enumerate().for_each(run);
        if workers == 0 {
            par(&mut out);
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
                .install(|| par(&mut out));
        }
    }
    Ok(out)
}

/// `Q11 = Sigma11^-1 + Q12 Q22^-1 Q21`, symmetrized. `workers = 0` uses the
/// available cores.
pub fn q11_dense(
    sigma11_inv: &DenseMatrix,
    q12: &CscMatrix,
    q22: &SparseCholesky,
    workers: usize,
) -> Result<DenseMatrix> {
    let m = q12.nrows();
    if sigma11_inv.rows() != m || sigma11_inv.cols() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            got: sigma11_inv.rows(),
        });
    }
    let mut q11 = sandwich(q12, &[(1.0, q22)], workers)?;
    for (a, b) in q11.as_mut_slice().iter_mut().zip(sigma11_inv.as_slice()) {
        *a += b;
    }
    q11.symmetrize();
    Ok(q11)
}

/// `lambda = eta(0) / sum_{h != 0} |eta(h)|`.
pub fn precision_lambda(stencil: &Stencil) -> f64 {
    let off = stencil.off_center_abs_sum();
    if off == 0.0 {
        f64::INFINITY
    } else {
        stencil.center() / off
    }
}

/// Smallest representative of `d` modulo `n` among `d - n, d, d + n`,
/// preferring `d` on ties.
fn wrap_lag(d: i64, n: i64) -> i64 {
    let mut best = d;
    for c in [d - n, d + n] {
        if c.abs() < best.abs() {
            best = c;
        }
    }
    best
}

/// Full approximate precision over observation indices.
pub fn approx_q(mask: &GridMask, index: &PartitionIndex, stencil: &Stencil, scheme: Scheme) -> Result<SparseSymMatrix> {
    check_index(mask, index)?;
    let cells = mask.cells();
    let n = mask.n_obs();
    let mut t = Vec::with_capacity(n * stencil.len());
    match scheme {
        Scheme::None | Scheme::Precision => {
            let lambda = if scheme == Scheme::Precision {
                let l = precision_lambda(stencil);
                if !(l > 1.0) {
                    return Err(Error::PrecisionAdjustmentInapplicable(l));
                }
                Some(l)
            } else {
                None
            };
            for (i, &cell) in cells.iter().enumerate() {
                let mut abs_sum = 0.0;
                for (h, v) in stencil.iter() {
                    if h == (0, 0) {
                        continue;
                    }
                    if let Some(j) = neighbor(mask, cell, h) {
                        t.push((i, j, v));
                        abs_sum += v.abs();
                    }
                }
                let diag = match lambda {
                    // an observation without observed neighbors keeps eta(0)
                    Some(l) if !index.is_fully(i) && abs_sum > 0.0 => l * abs_sum,
                    _ => stencil.center(),
                };
                t.push((i, i, diag));
            }
        }
        Scheme::Periodic => {
            if !mask.is_complete() {
                return Err(Error::PeriodicNeedsCompleteGrid);
            }
            let (n1, n2) = (mask.n1() as i64, mask.n2() as i64);
            for (i, &(r, c)) in cells.iter().enumerate() {
                for (h, v) in stencil.iter() {
                    let rr = (r as i64 + h.0 as i64).rem_euclid(n1);
                    let cc = (c as i64 + h.1 as i64).rem_euclid(n2);
                    // keep the entry only if h is the minimal wrapped lag of the pair
                    let w = (
                        wrap_lag(rr - r as i64, n1),
                        wrap_lag(cc - c as i64, n2),
                    );
                    if w == (h.0 as i64, h.1 as i64) {
                        let j = (rr * n2 + cc) as usize;
                        t.push((i, j, v));
                    }
                }
            }
        }
    }
    SparseSymMatrix::from_full_triplets(n, t)
}
