//! Sparse Cholesky with a fill-reducing ordering. The ordering is ours;
//! the supernodal numeric factorization and solves are faer's.

use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{LltError, LltRegularization};
use faer::sparse::linalg::cholesky::supernodal::SupernodalLltRef;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LltRef, SymbolicCholesky as Symbolic,
    SymbolicCholeskyRaw, SymmetricOrdering,
};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};

use super::sparse::SparseSymMatrix;
use crate::error::{Error, Result};

/// Elimination order used by [`SymbolicCholesky::analyze`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    Natural,
    Amd,
    /// AMD on indices `k..n`, then the first `k` indices eliminated last
    /// in their given order. Keeps a dense leading block from spreading
    /// fill through the rest of the factor; the block ends up as one dense
    /// trailing supernode.
    AmdLeadingLast(usize),
}

/// Ordering and supernodal layout for one sparsity pattern. Reusable for
/// any matrix with an identical pattern.
#[derive(Debug)]
pub struct SymbolicCholesky {
    n: usize,
    perm: Vec<usize>,
    inner: Symbolic<usize>,
    a_colptr: Vec<usize>,
    a_rowidx: Vec<usize>,
}

fn pattern(a: &SparseSymMatrix) -> SymbolicSparseColMatRef<'_, usize> {
    let csc = a.csc();
    SymbolicSparseColMatRef::new_checked(a.n(), a.n(), csc.colptr(), None, csc.rowidx())
}

impl SymbolicCholesky {
    pub fn analyze(a: &SparseSymMatrix, ordering: Ordering) -> Result<Arc<Self>> {
        let n = a.n();
        let perm = match ordering {
            Ordering::Natural => (0..n).collect(),
            Ordering::Amd => amd_order(a)?,
            Ordering::AmdLeadingLast(k) => {
                let k = k.min(n);
                let mut p: Vec<usize> = amd_order(&a.principal(k, n))?.into_iter().map(|i| i + k).collect();
                p.extend(0..k);
                p
            }
        };
        let mut pinv = vec![0usize; n];
        for (k, &i) in perm.iter().enumerate() {
            pinv[i] = k;
        }
        let params = CholeskySymbolicParams {
            supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
            ..Default::default()
        };
        let p = faer::perm::PermRef::new_checked(&perm, &pinv, n);
        let inner = factorize_symbolic_cholesky(pattern(a), Side::Lower, SymmetricOrdering::Custom(p), params)
            .map_err(|e| Error::InvalidInput(format!("symbolic Cholesky analysis failed: {e:?}")))?;
        let csc = a.csc();
        Ok(Arc::new(Self {
            n,
            perm,
            inner,
            a_colptr: csc.colptr().to_vec(),
            a_rowidx: csc.rowidx().to_vec(),
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `perm[k]` is the original index of the `k`-th pivot.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Number of stored factor values (supernode blocks in full).
    pub fn factor_nnz(&self) -> usize {
        self.inner.len_val()
    }

    fn matches(&self, a: &SparseSymMatrix) -> bool {
        a.n() == self.n && a.csc().colptr() == self.a_colptr.as_slice() && a.csc().rowidx() == self.a_rowidx.as_slice()
    }
}

fn amd_order(a: &SparseSymMatrix) -> Result<Vec<usize>> {
    let n = a.n();
    if n == 0 {
        return Ok(Vec::new());
    }
    let csc = a.csc();
    let (p, _, _) = amd::order(n, csc.colptr(), csc.rowidx(), &amd::Control::default())
        .map_err(|s| Error::InvalidInput(format!("fill-reducing ordering failed: {s:?}")))?;
    Ok(p)
}

/// Numeric factor `P A P^T = L L^T`.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    sym: Arc<SymbolicCholesky>,
    lx: Vec<f64>,
}

impl SparseCholesky {
    pub fn new(a: &SparseSymMatrix, ordering: Ordering, what: &'static str) -> Result<Self> {
        let sym = SymbolicCholesky::analyze(a, ordering)?;
        Self::with_symbolic(&sym, a, what)
    }

    pub fn with_symbolic(sym: &Arc<SymbolicCholesky>, a: &SparseSymMatrix, what: &'static str) -> Result<Self> {
        if !sym.matches(a) {
            return Err(Error::InvalidInput(format!(
                "{what}: sparsity pattern differs from the analyzed one"
            )));
        }
        let n = sym.n;
        let mut lx = vec![0.0; sym.inner.len_val()];
        if n == 0 {
            return Ok(Self { sym: Arc::clone(sym), lx });
        }
        if let Some(i) = a.csc().values().iter().position(|v| !v.is_finite()) {
            let col = a.csc().colptr().partition_point(|&p| p <= i) - 1;
            return Err(Error::NotPositiveDefinite {
                what,
                pivot: col,
                value: a.csc().values()[i],
                diagnostic: "non-finite entry".into(),
            });
        }
        let par = faer::get_global_parallelism();
        let mat = SparseColMatRef::new(pattern(a), a.csc().values());
        let mut mem = MemBuffer::new(sym.inner.factorize_numeric_llt_scratch::<f64>(par, Default::default()));
        let res = sym.inner.factorize_numeric_llt(
            &mut lx,
            mat,
            Side::Lower,
            LltRegularization::default(),
            par,
            MemStack::new(&mut mem),
            Default::default(),
        );
        match res {
            Ok(_) => Ok(Self { sym: Arc::clone(sym), lx }),
            Err(LltError::NonPositivePivot { index }) => Err(Error::NotPositiveDefinite {
                what,
                pivot: sym.perm[index],
                value: f64::NAN,
                diagnostic: format!("elimination step {index} of {n}"),
            }),
        }
    }

    pub fn n(&self) -> usize {
        self.sym.n
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.sym
    }

    pub fn logdet(&self) -> f64 {
        let SymbolicCholeskyRaw::Supernodal(s) = self.sym.inner.raw() else {
            // only empty matrices have no supernodal layout
            return 0.0;
        };
        let f = SupernodalLltRef::new(s, &self.lx);
        let mut sum = 0.0;
        for k in 0..s.n_supernodes() {
            let v = f.supernode(k).val();
            for j in 0..v.ncols() {
                sum += v[(j, j)].ln();
            }
        }
        2.0 * sum
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_block(b, 1);
    }

    /// `x^T A^-1 x`.
    pub fn quadform(&self, b: &[f64]) -> f64 {
        let x = self.solve(b);
        b.iter().zip(&x).map(|(u, v)| u * v).sum()
    }

    /// Solves `A X = B` in place for a row-major `n x k` right-hand side.
    pub fn solve_block(&self, b: &mut [f64], k: usize) {
        let n = self.n();
        assert_eq!(b.len(), n * k);
        if n == 0 || k == 0 {
            return;
        }
        let par = if k > 1 { faer::get_global_parallelism() } else { Par::Seq };
        let f = LltRef::new(&self.sym.inner, &self.lx);
        let mut mem = MemBuffer::new(self.sym.inner.solve_in_place_scratch::<f64>(k, par));
        let rhs = MatMut::from_row_major_slice_mut(b, n, k);
        f.solve_in_place_with_conj(Conj::No, rhs, par, MemStack::new(&mut mem));
    }
}
