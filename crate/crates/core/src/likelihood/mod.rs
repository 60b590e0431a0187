//! Exact and approximate Gaussian loglikelihoods of gridded observations.

mod problem;
mod solvers;

use serde::{Deserialize, Serialize};

pub use problem::{breakdown, tile_blocks, Method, Problem, DEFAULT_J, DEFAULT_M_CAP};
pub use solvers::{
    BlockSolver, CovarianceSolver, DenseSolver, ExactSolver, FullQSolver, LeanSolver, PrecisionSolver, MAX_BLOCK,
};

use crate::data::GridField;
use crate::error::{Error, Result};
use crate::precision::Scheme;
use crate::spectral::{Model, ModelParams};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A loglikelihood value with its determinant and quadratic-form parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoglikBreakdown {
    pub loglik: f64,
    /// `log det (Sigma + sigma^2 I)`.
    pub logdet: f64,
    /// `(y - mu)^T (Sigma + sigma^2 I)^-1 (y - mu)`.
    pub quadform: f64,
    pub n_obs: usize,
    pub method: String,
    /// Seconds.
    pub wall_time: f64,
}

impl LoglikBreakdown {
    pub fn new(logdet: f64, quadform: f64, n_obs: usize, method: &str) -> Self {
        Self {
            loglik: -0.5 * (n_obs as f64 * LN_2PI + logdet + quadform),
            logdet,
            quadform,
            n_obs,
            method: method.to_string(),
            wall_time: 0.0,
        }
    }
}

fn require_sigma2(params: &ModelParams, nugget: bool) -> Result<()> {
    match (nugget, params.sigma2 > 0.0) {
        (true, false) => Err(Error::InvalidParams("this path needs sigma2 > 0".into())),
        (false, true) => Err(Error::InvalidParams("this path needs sigma2 = 0".into())),
        _ => Ok(()),
    }
}

fn run(params: &ModelParams, data: &GridField, j: usize, method: Method) -> Result<LoglikBreakdown> {
    params.validate()?;
    Problem::new(data)?.with_j(j).loglik(&Model::from(*params), &method)
}

/// Exact loglikelihood without a nugget.
pub fn loglik_exact(params: &ModelParams, data: &GridField, j: usize) -> Result<LoglikBreakdown> {
    require_sigma2(params, false)?;
    run(params, data, j, Method::Exact)
}

/// Exact nugget loglikelihood through the whole precision.
pub fn loglik_nugget_fullq(params: &ModelParams, data: &GridField, j: usize) -> Result<LoglikBreakdown> {
    require_sigma2(params, true)?;
    run(params, data, j, Method::FullQ)
}

/// Exact nugget loglikelihood with dense work limited to `m_n x m_n`.
pub fn loglik_nugget_lean(params: &ModelParams, data: &GridField, j: usize) -> Result<LoglikBreakdown> {
    require_sigma2(params, true)?;
    run(params, data, j, Method::Lean)
}

/// Loglikelihood with an approximate precision treated as exact.
pub fn loglik_approx(params: &ModelParams, data: &GridField, scheme: Scheme) -> Result<LoglikBreakdown> {
    run(params, data, DEFAULT_J, Method::Approx { scheme })
}

/// Sum of dense loglikelihoods over groups of observed cells.
pub fn loglik_indblocks(
    params: &ModelParams,
    data: &GridField,
    blocks: &[Vec<(usize, usize)>],
    j: usize,
) -> Result<LoglikBreakdown> {
    params.validate()?;
    let problem = Problem::new(data)?.with_j(j);
    let model = Model::from(*params);
    let solver = problem.block_solver(&model, blocks)?;
    Ok(breakdown(solver.as_ref(), problem.y(), model.mu, "indblocks"))
}
