//! Kriging and conditional simulation at unobserved grid cells.
//!
//! Predictions are for the noisy value at each target, so prediction
//! variances include the nugget. Targets outside the data rectangle enlarge
//! it; the added cells are unobserved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::GridField;
use crate::error::{Error, Result};
use crate::likelihood::{CovarianceSolver, Method, Problem};
use crate::linalg::dot;
use crate::spectral::{CirculantEmbedding, CovarianceTable, FieldSampler, Model, ModelParams};

/// Up to this many targets, standard deviations come from one exact solve
/// per target; beyond it, from conditional simulations.
pub const EXACT_SD_MAX_TARGETS: usize = 2048;

/// Default number of draws for simulation-based standard deviations.
pub const DEFAULT_SD_SIMS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRequest {
    pub targets: Vec<(usize, usize)>,
    pub want_sd: bool,
    /// Conditional draws (also used for standard deviations of large target sets).
    pub n_sims: usize,
    pub seed: u64,
}

impl PredictionRequest {
    pub fn new(targets: Vec<(usize, usize)>) -> Self {
        Self {
            targets,
            want_sd: false,
            n_sims: DEFAULT_SD_SIMS,
            seed: 0,
        }
    }

    pub fn with_sd(mut self) -> Self {
        self.want_sd = true;
        self
    }

    pub fn with_sims(mut self, n_sims: usize, seed: u64) -> Self {
        self.n_sims = n_sims;
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdSource {
    Exact,
    Simulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub targets: Vec<(usize, usize)>,
    pub mean: Vec<f64>,
    pub sd: Option<Vec<f64>>,
    pub sd_source: Option<SdSource>,
}

/// Factorized covariance of the observations, ready to predict at a fixed
/// set of targets. Everything is held in the orientation the solvers use.
pub struct Kriger {
    model: Model,
    grid: (usize, usize),
    j: usize,
    obs: Vec<(usize, usize)>,
    targets: Vec<(usize, usize)>,
    solver: Option<Box<dyn CovarianceSolver>>,
    table: CovarianceTable,
    circ: CirculantEmbedding,
    weights: Vec<f64>,
}

impl Kriger {
    /// Targets must be unobserved cells.
    pub fn new(model: &Model, data: &GridField, targets: &[(usize, usize)], j: usize) -> Result<Self> {
        Self::build(model, data, targets, j, false)
    }

    /// Like [`Kriger::new`] but accepts observed cells as targets, which
    /// then predict from data that include their own value.
    pub fn allowing_observed(model: &Model, data: &GridField, targets: &[(usize, usize)], j: usize) -> Result<Self> {
        Self::build(model, data, targets, j, true)
    }

    fn build(model: &Model, data: &GridField, targets: &[(usize, usize)], j: usize, allow_observed: bool) -> Result<Self> {
        model.validate()?;
        if targets.is_empty() {
            return Err(Error::InvalidInput("no prediction targets".into()));
        }
        let (n1, n2) = targets
            .iter()
            .fold(data.dims(), |(a, b), &(r, c)| (a.max(r + 1), b.max(c + 1)));
        let mut field = data.enlarged(n1, n2);
        if !allow_observed {
            if let Some(&(row, col)) = targets.iter().find(|&&(r, c)| !field.get(r, c).is_nan()) {
                return Err(Error::TargetObserved { row, col });
            }
        }
        let mut model = model.clone();
        let mut targets = targets.to_vec();
        if n1 > n2 {
            field = field.transpose();
            model = model.transpose();
            targets.iter_mut().for_each(|t| *t = (t.1, t.0));
        }
        let grid = field.dims();
        let (obs, solver, table, z) = if field.n_obs() == 0 {
            (Vec::new(), None, CovarianceTable::new(&model, grid, j)?, Vec::new())
        } else {
            let problem = Problem::new(&field)?.with_j(j);
            let solver = problem.solver(&model, &Method::Exact)?;
            let z: Vec<f64> = problem.y().iter().map(|v| v - model.mu).collect();
            (problem.mask().cells().to_vec(), Some(solver), problem.table(&model)?, z)
        };
        let weights = solver.as_ref().map_or_else(Vec::new, |s| s.solve(&z));
        let circ = CirculantEmbedding::new(&table);
        Ok(Self {
            model,
            grid,
            j,
            obs,
            targets,
            solver,
            table,
            circ,
            weights,
        })
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    /// `mu + Sigma_0^T (Sigma + sigma^2 I)^-1 (y - mu 1)`.
    pub fn mean(&self) -> Result<Vec<f64>> {
        if self.obs.is_empty() {
            return Ok(vec![self.model.mu; self.targets.len()]);
        }
        let k = self.circ.apply(&self.obs, &self.weights, &self.targets)?;
        Ok(k.into_iter().map(|v| self.model.mu + v).collect())
    }

    /// Conditional variance of the noisy value at each target, one solve
    /// per target.
    pub fn variance(&self) -> Vec<f64> {
        let prior = self.table.k0() + self.model.sigma2;
        let Some(solver) = &self.solver else {
            return vec![prior; self.targets.len()];
        };
        self.targets
            .par_iter()
            .map(|&t| {
                let s: Vec<f64> = self.obs.iter().map(|&c| self.table.cov(c, t)).collect();
                (prior - dot(&s, &solver.solve(&s))).max(0.0)
            })
            .collect()
    }

    /// `n` conditional draws over the targets. Draws come in pairs from one
    /// complex spectral sample; pair `k` uses stream `k` of the seeded
    /// generator, so the result does not depend on the thread count.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::InvalidInput("n_sims must be >= 1".into()));
        }
        let mean = self.mean()?;
        let sampler = FieldSampler::new(&self.model.with_mu(0.0), self.grid, self.j.max(2))?;
        let sd = self.model.sigma2.sqrt();
        let n2 = self.grid.1;
        let pairs: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n.div_ceil(2))
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let (za, zb) = sampler.sample_pair(&mut rng);
                let mut noisy = |z: &[f64], cells: &[(usize, usize)]| -> Vec<f64> {
                    cells
                        .iter()
                        .map(|&(r, c)| {
                            let e = if sd > 0.0 { sd * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
                            z[r * n2 + c] + e
                        })
                        .collect()
                };
                let (ya, yb) = (noisy(&za, &self.obs), noisy(&zb, &self.obs));
                let (ta, tb) = (noisy(&za, &self.targets), noisy(&zb, &self.targets));
                let (ka, kb) = match &self.solver {
                    Some(s) => self.circ.apply_pair(&self.obs, &s.solve(&ya), &s.solve(&yb), &self.targets)?,
                    None => (vec![0.0; self.targets.len()], vec![0.0; self.targets.len()]),
                };
                let draw = |t: Vec<f64>, k: Vec<f64>| -> Vec<f64> {
                    mean.iter().zip(t).zip(k).map(|((m, t), k)| m + t - k).collect()
                };
                Ok((draw(ta, ka), draw(tb, kb)))
            })
            .collect();
        let mut draws = Vec::with_capacity(n);
        for p in pairs {
            let (a, b) = p?;
            draws.push(a);
            draws.push(b);
        }
        draws.truncate(n);
        Ok(draws)
    }
}

/// Per-target sample standard deviation of draws.
fn sample_sd(draws: &[Vec<f64>]) -> Vec<f64> {
    let n = draws.len() as f64;
    let k = draws[0].len();
    (0..k)
        .map(|t| {
            let m = draws.iter().map(|d| d[t]).sum::<f64>() / n;
            (draws.iter().map(|d| (d[t] - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect()
}

/// Kriging means, and standard deviations if requested.
pub fn krige(params: &ModelParams, data: &GridField, request: &PredictionRequest, j: usize) -> Result<Prediction> {
    params.validate()?;
    let kriger = Kriger::new(&Model::from(*params), data, &request.targets, j)?;
    let mean = kriger.mean()?;
    let (sd, sd_source) = if !request.want_sd {
        (None, None)
    } else if request.targets.len() <= EXACT_SD_MAX_TARGETS {
        (Some(kriger.variance().into_iter().map(f64::sqrt).collect()), Some(SdSource::Exact))
    } else {
        if request.n_sims < 2 {
            return Err(Error::InvalidInput(
                "simulation-based standard deviations need n_sims >= 2".into(),
            ));
        }
        let draws = kriger.simulate(request.n_sims, request.seed)?;
        (Some(sample_sd(&draws)), Some(SdSource::Simulation))
    };
    Ok(Prediction {
        targets: request.targets.clone(),
        mean,
        sd,
        sd_source,
    })
}

/// `request.n_sims` conditional draws over the targets.
pub fn cond_sim(params: &ModelParams, data: &GridField, request: &PredictionRequest, j: usize) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    Kriger::new(&Model::from(*params), data, &request.targets, j)?.simulate(request.n_sims, request.seed)
}
