use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::solvers::{
    BlockSolver, CovarianceSolver, DenseSolver, ExactSolver, FullQSolver, LeanSolver, PrecisionSolver,
};
use super::LoglikBreakdown;
use crate::data::GridField;
use crate::error::{Error, Result};
use crate::lattice::{classify, GridMask, PartitionIndex};
use crate::linalg::{Ordering, SparseCholesky, SparseSymMatrix, SymbolicCholesky};
use crate::precision::{approx_q, FullPattern, PrecisionLayout, Scheme};
use crate::spectral::{CovarianceTable, Lag, Model, Stencil};

/// Default cap on the number of partially neighbored observations.
pub const DEFAULT_M_CAP: usize = 20_000;

/// Default oversampling factor of the covariance torus.
pub const DEFAULT_J: usize = 3;

/// How the likelihood is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Method {
    /// Exact; without a nugget through the partial/fully split, with a
    /// nugget through the whole precision.
    Exact,
    /// Exact nugget likelihood through the whole precision.
    FullQ,
    /// Exact nugget likelihood with no dense matrix beyond `m_n x m_n`.
    Lean,
    /// Approximate precision treated as exact (no nugget).
    Approx { scheme: Scheme },
    /// Independent rectangular tiles of `rows x cols` cells.
    IndBlocks { rows: usize, cols: usize },
    /// Dense covariance of all observations.
    Dense,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Exact => "exact".into(),
            Method::FullQ => "fullq".into(),
            Method::Lean => "lean".into(),
            Method::Approx { scheme } => scheme.name().into(),
            Method::IndBlocks { rows, cols } => format!("indblocks{rows}x{cols}"),
            Method::Dense => "dense".into(),
        }
    }

    pub fn is_approximate(&self) -> bool {
        matches!(self, Method::Approx { .. } | Method::IndBlocks { .. })
    }
}

/// Precomputed layout for one stencil support on one mask.
pub(crate) struct Structure {
    pub grid: (usize, usize),
    pub index: PartitionIndex,
    pub partial_cells: Vec<(usize, usize)>,
    pub full_cells: Vec<(usize, usize)>,
    // pattern source for the exact-method blocks, built on first use
    mask: GridMask,
    stencil: Stencil,
    layout: OnceLock<Result<PrecisionLayout>>,
    q22_symbolic: OnceLock<Result<Arc<SymbolicCholesky>>>,
    full: OnceLock<Result<(Arc<FullPattern>, Arc<SymbolicCholesky>)>>,
    approx: Mutex<HashMap<Scheme, Arc<SymbolicCholesky>>>,
}

impl Structure {
    fn new(mask: &GridMask, stencil: &Stencil) -> Result<Self> {
        let index = classify(mask, stencil)?;
        let cells = mask.cells();
        let partial_cells = index.partial().iter().map(|&i| cells[i]).collect();
        let full_cells = index.full().iter().map(|&i| cells[i]).collect();
        Ok(Self {
            grid: mask.dims(),
            index,
            partial_cells,
            full_cells,
            mask: mask.clone(),
            stencil: stencil.clone(),
            layout: OnceLock::new(),
            q22_symbolic: OnceLock::new(),
            full: OnceLock::new(),
            approx: Mutex::new(HashMap::new()),
        })
    }

    pub fn layout(&self) -> Result<&PrecisionLayout> {
        self.layout
            .get_or_init(|| PrecisionLayout::new(&self.mask, &self.index, &self.stencil))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Analysis of the `Q22` pattern, done on first use; `q22` is any
    /// matrix with that pattern.
    pub fn q22_symbolic(&self, q22: &SparseSymMatrix) -> Result<Arc<SymbolicCholesky>> {
        self.q22_symbolic.get_or_init(|| SymbolicCholesky::analyze(q22, Ordering::Amd)).clone()
    }

    pub fn full(&self) -> Result<(Arc<FullPattern>, Arc<SymbolicCholesky>)> {
        self.full
            .get_or_init(|| {
                let pattern = self.layout()?.full_pattern();
                let sym = SymbolicCholesky::analyze(pattern.pattern(), Ordering::AmdLeadingLast(self.index.m_n()))?;
                Ok((Arc::new(pattern), sym))
            })
            .clone()
    }
}

/// Observations prepared once for repeated likelihood evaluations at
/// different parameter values. Grids with more rows than columns are
/// handled in transposed form.
pub struct Problem {
    transposed: bool,
    mask: GridMask,
    y: Vec<f64>,
    j: usize,
    m_cap: usize,
    workers: usize,
    structures: Mutex<Vec<(Vec<Lag>, Arc<Structure>)>>,
}

impl Problem {
    pub fn new(data: &GridField) -> Result<Self> {
        let transposed = data.n1() > data.n2();
        let field = if transposed { data.transpose() } else { data.clone() };
        let mask = field.mask()?;
        Ok(Self {
            transposed,
            y: field.observations(),
            mask,
            j: DEFAULT_J,
            m_cap: DEFAULT_M_CAP,
            workers: 0,
            structures: Mutex::new(Vec::new()),
        })
    }

    pub fn with_j(mut self, j: usize) -> Self {
        self.j = j;
        self
    }

    pub fn with_m_cap(mut self, cap: usize) -> Self {
        self.m_cap = cap;
        self
    }

    /// Worker threads for the dense-block assembly; 0 uses all cores.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn is_transposed(&self) -> bool {
        self.transposed
    }

    /// Mask in the internal orientation.
    pub fn mask(&self) -> &GridMask {
        &self.mask
    }

    /// Observations in the internal orientation (row-major).
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Model in the internal orientation.
    pub fn oriented(&self, model: &Model) -> Model {
        if self.transposed {
            model.transpose()
        } else {
            model.clone()
        }
    }

    /// A cell of the original grid in the internal orientation.
    pub fn orient_cell(&self, cell: (usize, usize)) -> (usize, usize) {
        if self.transposed {
            (cell.1, cell.0)
        } else {
            cell
        }
    }

    pub(crate) fn structure(&self, stencil: &Stencil) -> Result<Arc<Structure>> {
        let support: Vec<Lag> = stencil.iter().map(|(h, _)| h).collect();
        let mut cache = self.structures.lock().expect("structure cache poisoned");
        if let Some((_, s)) = cache.iter().find(|(k, _)| *k == support) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(Structure::new(&self.mask, stencil)?);
        cache.push((support, Arc::clone(&s)));
        Ok(s)
    }

    /// Number of partially neighbored observations for this stencil.
    pub fn m_n(&self, model: &Model) -> Result<usize> {
        Ok(self.structure(&self.oriented(model).stencil())?.index.m_n())
    }

    fn check_m(&self, m: usize) -> Result<()> {
        if m > self.m_cap {
            return Err(Error::SizeGuard {
                what: "partially neighbored observations m_n",
                size: m,
                limit: self.m_cap,
                hint: "impute the missing cells so that fewer observations lie on the boundary of the observed region",
            });
        }
        Ok(())
    }

    pub fn table(&self, model: &Model) -> Result<CovarianceTable> {
        CovarianceTable::new(&self.oriented(model), self.mask.dims(), self.j)
    }

    /// Solver for the covariance of the observations (internal orientation).
    pub fn solver(&self, model: &Model, method: &Method) -> Result<Box<dyn CovarianceSolver>> {
        model.validate()?;
        let model = self.oriented(model);
        let stencil = model.stencil();
        let nugget = model.sigma2 > 0.0;
        match method {
            Method::Exact | Method::FullQ | Method::Lean => {
                let st = self.structure(&stencil)?;
                self.check_m(st.index.m_n())?;
                let table = CovarianceTable::new(&model, self.mask.dims(), self.j)?;
                let exact = ExactSolver::new(Arc::clone(&st), &table, &stencil)?;
                drop(table);
                match (method, nugget) {
                    (_, false) => Ok(Box::new(exact)),
                    (Method::Lean, true) => Ok(Box::new(LeanSolver::new(exact, model.sigma2, self.workers)?)),
                    (_, true) => Ok(Box::new(FullQSolver::new(st, &exact, &stencil, model.sigma2, self.workers)?)),
                }
            }
            Method::Approx { scheme } => {
                if nugget {
                    return Err(Error::InvalidParams(format!(
                        "the {} approximation is defined for sigma2 = 0 only",
                        scheme.name()
                    )));
                }
                let st = self.structure(&stencil)?;
                let q = approx_q(&self.mask, &st.index, &stencil, *scheme)?;
                let sym = {
                    let mut cache = st.approx.lock().expect("approx cache poisoned");
                    match cache.get(scheme) {
                        Some(s) => Arc::clone(s),
                        None => {
                            let s = SymbolicCholesky::analyze(&q, Ordering::Amd)?;
                            cache.insert(*scheme, Arc::clone(&s));
                            s
                        }
                    }
                };
                let chol = match SparseCholesky::with_symbolic(&sym, &q, "approximate precision") {
                    Err(Error::InvalidInput(_)) => SparseCholesky::new(&q, Ordering::Amd, "approximate precision")?,
                    other => other?,
                };
                Ok(Box::new(PrecisionSolver::new(q, chol)))
            }
            Method::IndBlocks { rows, cols } => {
                let (r, c) = if self.transposed { (*cols, *rows) } else { (*rows, *cols) };
                let groups = tile_groups(&self.mask, r, c)?;
                let table = CovarianceTable::new(&model, self.mask.dims(), self.j)?;
                Ok(Box::new(BlockSolver::new(&table, model.sigma2, self.n_obs(), &groups)?))
            }
            Method::Dense => {
                let table = CovarianceTable::new(&model, self.mask.dims(), self.j)?;
                Ok(Box::new(DenseSolver::new(&table, model.sigma2, self.mask.cells())?))
            }
        }
    }

    /// Independent-blocks solver for explicit groups of cells of the original
    /// grid.
    pub fn block_solver(&self, model: &Model, blocks: &[Vec<(usize, usize)>]) -> Result<Box<dyn CovarianceSolver>> {
        model.validate()?;
        let oriented = self.oriented(model);
        let mut groups = Vec::with_capacity(blocks.len());
        for b in blocks {
            let mut g = Vec::with_capacity(b.len());
            for &cell in b {
                let (r, c) = self.orient_cell(cell);
                let i = self.mask.obs_index(r as i64, c as i64).ok_or_else(|| {
                    Error::InvalidInput(format!("block cell ({}, {}) is not observed", cell.0, cell.1))
                })?;
                g.push((i, (r, c)));
            }
            groups.push(g);
        }
        let table = CovarianceTable::new(&oriented, self.mask.dims(), self.j)?;
        Ok(Box::new(BlockSolver::new(&table, oriented.sigma2, self.n_obs(), &groups)?))
    }

    pub fn loglik(&self, model: &Model, method: &Method) -> Result<LoglikBreakdown> {
        let start = Instant::now();
        let solver = self.solver(model, method)?;
        let mut b = breakdown(solver.as_ref(), &self.y, model.mu, &method.name());
        b.wall_time = start.elapsed().as_secs_f64();
        Ok(b)
    }
}

/// Loglikelihood of `y` with constant mean `mu` from a covariance solver.
pub fn breakdown(solver: &dyn CovarianceSolver, y: &[f64], mu: f64, method: &str) -> LoglikBreakdown {
    let z: Vec<f64> = y.iter().map(|v| v - mu).collect();
    let logdet = solver.logdet();
    let quadform = solver.quadform(&z);
    LoglikBreakdown::new(logdet, quadform, y.len(), method)
}

/// Observation groups of `rows x cols` tiles in row-major tile order.
fn tile_groups(mask: &GridMask, rows: usize, cols: usize) -> Result<Vec<Vec<(usize, (usize, usize))>>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput("block dimensions must be >= 1".into()));
    }
    let t2 = mask.n2().div_ceil(cols);
    let n_tiles = mask.n1().div_ceil(rows) * t2;
    let mut groups = vec![Vec::new(); n_tiles];
    for (i, &(r, c)) in mask.cells().iter().enumerate() {
        groups[(r / rows) * t2 + c / cols].push((i, (r, c)));
    }
    groups.retain(|g| !g.is_empty());
    Ok(groups)
}

/// Rectangular tiles of observed cells (original orientation).
pub fn tile_blocks(mask: &GridMask, rows: usize, cols: usize) -> Result<Vec<Vec<(usize, usize)>>> {
    Ok(tile_groups(mask, rows, cols)?
        .into_iter()
        .map(|g| g.into_iter().map(|e| e.1).collect())
        .collect())
}
