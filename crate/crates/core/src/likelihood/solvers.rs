use std::sync::Arc;

use super::problem::Structure;
use crate::error::{Error, Result};
use crate::linalg::{dot, CscMatrix, DenseCholesky, DenseMatrix, SparseCholesky, SparseSymMatrix};
use crate::precision::sandwich;
use crate::spectral::{CirculantEmbedding, CovarianceTable};

/// Log-determinant and linear solves with the covariance of the observations
/// (latent covariance plus nugget), vectors in the problem's observation
/// order.
pub trait CovarianceSolver: Send + Sync {
    fn n_obs(&self) -> usize;

    fn logdet(&self) -> f64;

    fn solve(&self, z: &[f64]) -> Vec<f64>;

    /// `z^T (Sigma + sigma^2 I)^-1 z`.
    fn quadform(&self, z: &[f64]) -> f64 {
        dot(z, &self.solve(z))
    }
}

fn sigma11(table: &CovarianceTable, cells: &[(usize, usize)]) -> DenseMatrix {
    let m = cells.len();
    DenseMatrix::from_fn(m, m, |i, j| table.cov(cells[i], cells[j]))
}

/// No nugget: `log det Sigma = log det Sigma11 - log det Q22` and
/// `Sigma^-1 z` from one covariance product between the two groups.
pub struct ExactSolver {
    st: Arc<Structure>,
    sigma11: DenseCholesky,
    q22: SparseSymMatrix,
    q22_chol: SparseCholesky,
    q12: CscMatrix,
    circ: CirculantEmbedding,
}

impl ExactSolver {
    pub(crate) fn new(st: Arc<Structure>, table: &CovarianceTable, stencil: &crate::spectral::Stencil) -> Result<Self> {
        let s11 = sigma11(table, &st.partial_cells);
        let sigma11 = DenseCholesky::factor_in_place(s11, "Sigma11")?;
        let q22 = st.layout()?.q22(stencil);
        let q22_chol = SparseCholesky::with_symbolic(&st.q22_symbolic(&q22)?, &q22, "Q22")?;
        let q12 = st.layout()?.q12(stencil);
        let circ = CirculantEmbedding::for_grid(table, st.grid);
        Ok(Self {
            st,
            sigma11,
            q22,
            q22_chol,
            q12,
            circ,
        })
    }

    /// `(a, t)` with `a = Sigma11^-1 z1` and `t = z2 - Sigma21 a`.
    fn parts(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (z1, mut t) = self.st.index.split(z).expect("length checked by caller");
        let a = self.sigma11.solve(&z1);
        if !t.is_empty() && !a.is_empty() {
            let s21a = self
                .circ
                .apply(&self.st.partial_cells, &a, &self.st.full_cells)
                .expect("cells inside grid");
            for (ti, si) in t.iter_mut().zip(&s21a) {
                *ti -= si;
            }
        }
        (z1, a, t)
    }

    pub(crate) fn sigma11_inverse(&self) -> DenseMatrix {
        self.sigma11.inverse()
    }

    pub(crate) fn q12(&self) -> &CscMatrix {
        &self.q12
    }

    pub(crate) fn q22(&self) -> &SparseSymMatrix {
        &self.q22
    }

    pub(crate) fn q22_chol(&self) -> &SparseCholesky {
        &self.q22_chol
    }
}

impl CovarianceSolver for ExactSolver {
    fn n_obs(&self) -> usize {
        self.st.index.n_obs()
    }

    fn logdet(&self) -> f64 {
        self.sigma11.logdet() - self.q22_chol.logdet()
    }

    fn solve(&self, z: &[f64]) -> Vec<f64> {
        let (_, a, t) = self.parts(z);
        let x2 = self.q22.matvec(&t);
        let mut x1 = a;
        for (x, v) in x1.iter_mut().zip(self.q12.matvec(&t)) {
            *x += v;
        }
        self.st.index.merge(&x1, &x2).expect("block sizes")
    }

    fn quadform(&self, z: &[f64]) -> f64 {
        let (z1, a, t) = self.parts(z);
        dot(&z1, &a) + self.q22.quadform(&t)
    }
}

/// Nugget via the whole precision: `log det = -log det Q + log det A` and
/// `(Sigma + sigma^2 I)^-1 z = A^-1 Q z` with `A = I + sigma^2 Q`.
pub struct FullQSolver {
    st: Arc<Structure>,
    q: SparseSymMatrix,
    q_chol: SparseCholesky,
    a_chol: SparseCholesky,
}

impl FullQSolver {
    pub(crate) fn new(
        st: Arc<Structure>,
        exact: &ExactSolver,
        stencil: &crate::spectral::Stencil,
        sigma2: f64,
        workers: usize,
    ) -> Result<Self> {
        let s11inv = exact.sigma11_inverse();
        let q11 = crate::precision::q11_dense(&s11inv, exact.q12(), exact.q22_chol(), workers)?;
        drop(s11inv);
        let (pattern, sym) = st.full()?;
        let q = pattern.fill(&q11, stencil);
        drop(q11);
        let q_chol = SparseCholesky::with_symbolic(&sym, &q, "Q")?;
        let a = shifted_same_pattern(&q, sigma2);
        let a_chol = SparseCholesky::with_symbolic(&sym, &a, "I + sigma2 Q")?;
        Ok(Self { st, q, q_chol, a_chol })
    }
}

/// `I + s A` for a matrix whose pattern already holds the full diagonal.
fn shifted_same_pattern(a: &SparseSymMatrix, s: f64) -> SparseSymMatrix {
    let mut out = a.clone();
    let csc = a.csc();
    let vals = out.values_mut();
    for j in 0..a.n() {
        for p in csc.colptr()[j]..csc.colptr()[j + 1] {
            vals[p] = s * csc.values()[p] + if csc.rowidx()[p] == j { 1.0 } else { 0.0 };
        }
    }
    out
}

impl CovarianceSolver for FullQSolver {
    fn n_obs(&self) -> usize {
        self.st.index.n_obs()
    }

    fn logdet(&self) -> f64 {
        self.a_chol.logdet() - self.q_chol.logdet()
    }

    fn solve(&self, z: &[f64]) -> Vec<f64> {
        let zb = self.st.index.to_blocked(z);
        let u = self.q.matvec(&zb);
        self.st.index.from_blocked(&self.a_chol.solve(&u))
    }
}

/// Nugget without any dense matrix beyond `m_n x m_n`: block elimination of
/// `A = I + sigma^2 Q` through `A22` and the Schur complement
/// `B11^-1 = I + sigma^2 Q11 - sigma^4 Q12 A22^-1 Q21`.
pub struct LeanSolver {
    exact: ExactSolver,
    sigma2: f64,
    a22_chol: SparseCholesky,
    b11inv: DenseCholesky,
}

impl LeanSolver {
    pub(crate) fn new(exact: ExactSolver, sigma2: f64, workers: usize) -> Result<Self> {
        let a22 = shifted_same_pattern(exact.q22(), sigma2);
        let a22_chol = SparseCholesky::with_symbolic(&exact.st.q22_symbolic(&a22)?, &a22, "I + sigma2 Q22")?;
        drop(a22);
        let s4 = sigma2 * sigma2;
        let mut b = sandwich(exact.q12(), &[(sigma2, exact.q22_chol()), (-s4, &a22_chol)], workers)?;
        {
            let s11inv = exact.sigma11_inverse();
            for (x, v) in b.as_mut_slice().iter_mut().zip(s11inv.as_slice()) {
                *x += sigma2 * v;
            }
        }
        b.add_diagonal(1.0);
        b.symmetrize();
        let b11inv = DenseCholesky::factor_in_place(b, "B11^-1")?;
        Ok(Self {
            exact,
            sigma2,
            a22_chol,
            b11inv,
        })
    }
}

impl CovarianceSolver for LeanSolver {
    fn n_obs(&self) -> usize {
        self.exact.n_obs()
    }

    fn logdet(&self) -> f64 {
        self.exact.logdet() + self.a22_chol.logdet() + self.b11inv.logdet()
    }

    fn solve(&self, z: &[f64]) -> Vec<f64> {
        let st = &self.exact.st;
        let u = self.exact.solve(z);
        let (mut t1, u2) = st.index.split(&u).expect("length");
        let p2 = self.a22_chol.solve(&u2);
        for (t, v) in t1.iter_mut().zip(self.exact.q12().matvec(&p2)) {
            *t -= self.sigma2 * v;
        }
        let p1 = self.b11inv.solve(&t1);
        let mut x2 = self.a22_chol.solve(&self.exact.q12().matvec_t(&p1));
        for (x, p) in x2.iter_mut().zip(&p2) {
            *x = p - self.sigma2 * *x;
        }
        st.index.merge(&p1, &x2).expect("block sizes")
    }
}

/// Treats an approximate precision as exact: `log det = -log det Q`,
/// `solve(z) = Q z`.
pub struct PrecisionSolver {
    q: SparseSymMatrix,
    chol: SparseCholesky,
}

impl PrecisionSolver {
    pub(crate) fn new(q: SparseSymMatrix, chol: SparseCholesky) -> Self {
        Self { q, chol }
    }
}

impl CovarianceSolver for PrecisionSolver {
    fn n_obs(&self) -> usize {
        self.q.n()
    }

    fn logdet(&self) -> f64 {
        -self.chol.logdet()
    }

    fn solve(&self, z: &[f64]) -> Vec<f64> {
        self.q.matvec(z)
    }

    fn quadform(&self, z: &[f64]) -> f64 {
        self.q.quadform(z)
    }
}

/// Dense covariance over groups of observations, ignoring cross-group
/// dependence.
pub struct BlockSolver {
    n: usize,
    blocks: Vec<(Vec<usize>, DenseCholesky)>,
}

/// Largest block accepted by [`BlockSolver`].
pub const MAX_BLOCK: usize = 4096;

impl BlockSolver {
    /// `groups` are observation indices with their cells.
    pub fn new(table: &CovarianceTable, sigma2: f64, n: usize, groups: &[Vec<(usize, (usize, usize))>]) -> Result<Self> {
        let mut seen = vec![false; n];
        let mut blocks = Vec::with_capacity(groups.len());
        for g in groups {
            if g.len() > MAX_BLOCK {
                return Err(Error::SizeGuard {
                    what: "block size",
                    size: g.len(),
                    limit: MAX_BLOCK,
                    hint: "use smaller blocks",
                });
            }
            if g.is_empty() {
                continue;
            }
            for &(i, _) in g {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidInput("blocks must partition the observations".into()));
                }
            }
            let mut m = DenseMatrix::from_fn(g.len(), g.len(), |a, b| table.cov(g[a].1, g[b].1));
            m.add_diagonal(sigma2);
            let chol = DenseCholesky::factor_in_place(m, "block covariance")?;
            blocks.push((g.iter().map(|e| e.0).collect(), chol));
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidInput("blocks must cover every observation".into()));
        }
        Ok(Self { n, blocks })
    }
}

impl CovarianceSolver for BlockSolver {
    fn n_obs(&self) -> usize {
        self.n
    }

    fn logdet(&self) -> f64 {
        self.blocks.iter().map(|b| b.1.logdet()).sum()
    }

    fn solve(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (idx, chol) in &self.blocks {
            let zb: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
            for (&i, v) in idx.iter().zip(chol.solve(&zb)) {
                out[i] = v;
            }
        }
        out
    }
}

/// Fully dense covariance (reference computations).
pub struct DenseSolver {
    chol: DenseCholesky,
}

impl DenseSolver {
    pub fn new(table: &CovarianceTable, sigma2: f64, cells: &[(usize, usize)]) -> Result<Self> {
        let mut m = sigma11(table, cells);
        m.add_diagonal(sigma2);
        Ok(Self {
            chol: DenseCholesky::factor_in_place(m, "covariance")?,
        })
    }
}

impl CovarianceSolver for DenseSolver {
    fn n_obs(&self) -> usize {
        self.chol.dim()
    }

    fn logdet(&self) -> f64 {
        self.chol.logdet()
    }

    fn solve(&self, z: &[f64]) -> Vec<f64> {
        self.chol.solve(z)
    }

    fn quadform(&self, z: &[f64]) -> f64 {
        self.chol.quadform(z)
    }
}
