//! Slow dense reference computations for validation.

use crate::data::GridField;
use crate::error::{Error, Result};
use crate::lattice::GridMask;
use crate::likelihood::LoglikBreakdown;
use crate::linalg::{dot, DenseCholesky, DenseMatrix};
use crate::spectral::{padded_dims, CovarianceTable, Model, ModelParams, TORUS_CAP};

/// Default oversampling of the reference covariance table.
pub const DEFAULT_J_HI: usize = 64;

/// Largest problem accepted by [`dense_loglik`].
pub const MAX_DENSE_LOGLIK: usize = 4096;

/// Largest problem accepted by [`dense_q`].
pub const MAX_DENSE_Q: usize = 2048;

/// Table on a torus of at least `n J_hi` per axis, widened to the decay
/// length of the model on short axes, each axis capped at `max(2048, 2n)`
/// to bound memory.
pub fn oracle_table(model: &Model, grid: (usize, usize), j_hi: usize) -> Result<CovarianceTable> {
    if j_hi == 0 {
        return Err(Error::InvalidInput("J_hi must be >= 1".into()));
    }
    let padded = padded_dims(&model.shape, grid, j_hi);
    let axis = |n: usize, p: usize| p.max(n * j_hi).min(TORUS_CAP.max(2 * n));
    CovarianceTable::with_dims(model, grid, (axis(grid.0, padded.0), axis(grid.1, padded.1)), j_hi)
}

fn guard(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::SizeGuard {
            what: "observations for the dense reference",
            size: n,
            limit,
            hint: "the dense reference is meant for small validation problems",
        });
    }
    Ok(())
}

/// `[K(x_i - x_j)] + sigma^2 I` over the given cells.
pub fn dense_covariance(table: &CovarianceTable, cells: &[(usize, usize)], sigma2: f64) -> DenseMatrix {
    let mut m = DenseMatrix::from_fn(cells.len(), cells.len(), |i, j| table.cov(cells[i], cells[j]));
    m.add_diagonal(sigma2);
    m
}

/// Loglikelihood by a dense Cholesky of the full covariance.
pub fn dense_loglik(params: &ModelParams, data: &GridField, j_hi: usize) -> Result<LoglikBreakdown> {
    params.validate()?;
    let mask = data.mask()?;
    guard(mask.n_obs(), MAX_DENSE_LOGLIK)?;
    let table = oracle_table(&params.model(), data.dims(), j_hi)?;
    let cov = dense_covariance(&table, mask.cells(), params.sigma2);
    let chol = DenseCholesky::factor_in_place(cov, "dense covariance")?;
    let z: Vec<f64> = data.observations().iter().map(|v| v - params.mu).collect();
    Ok(LoglikBreakdown::new(chol.logdet(), chol.quadform(&z), z.len(), "dense"))
}

/// Explicit inverse of the latent covariance over the observed cells.
pub fn dense_q(params: &ModelParams, mask: &GridMask, j_hi: usize) -> Result<DenseMatrix> {
    params.validate()?;
    guard(mask.n_obs(), MAX_DENSE_Q)?;
    let table = oracle_table(&params.model(), mask.dims(), j_hi)?;
    let cov = dense_covariance(&table, mask.cells(), 0.0);
    Ok(DenseCholesky::factor_in_place(cov, "dense covariance")?.inverse())
}

/// Maximum over grid lags of `|K(h; J, n) - K(h; J + 1, n)|`.
pub fn delta_j(params: &ModelParams, n: (usize, usize), j: usize) -> Result<f64> {
    let model = params.model();
    let a = CovarianceTable::exact(&model, n, j)?;
    let b = CovarianceTable::exact(&model, n, j + 1)?;
    Ok(a.max_lag_diff(&b))
}

/// Conditional mean and covariance of the noisy values at `targets` given
/// the observations, by dense linear algebra.
pub fn dense_conditional(
    params: &ModelParams,
    data: &GridField,
    targets: &[(usize, usize)],
    j_hi: usize,
) -> Result<(Vec<f64>, DenseMatrix)> {
    params.validate()?;
    let mask = data.mask()?;
    guard(mask.n_obs() + targets.len(), MAX_DENSE_LOGLIK)?;
    let (n1, n2) = targets
        .iter()
        .fold(data.dims(), |(a, b), &(r, c)| (a.max(r + 1), b.max(c + 1)));
    let table = oracle_table(&params.model(), (n1, n2), j_hi)?;
    let cells = mask.cells();
    let chol = DenseCholesky::factor_in_place(dense_covariance(&table, cells, params.sigma2), "dense covariance")?;
    let z: Vec<f64> = data.observations().iter().map(|v| v - params.mu).collect();
    let w = chol.solve(&z);
    let cross: Vec<Vec<f64>> = targets
        .iter()
        .map(|&t| cells.iter().map(|&c| table.cov(t, c)).collect())
        .collect();
    let mean = cross.iter().map(|s| params.mu + dot(s, &w)).collect();
    let solved: Vec<Vec<f64>> = cross.iter().map(|s| chol.solve(s)).collect();
    let cov = DenseMatrix::from_fn(targets.len(), targets.len(), |a, b| {
        let prior = table.cov(targets[a], targets[b]) + if a == b { params.sigma2 } else { 0.0 };
        prior - dot(&cross[a], &solved[b])
    });
    Ok((mean, cov))
}
