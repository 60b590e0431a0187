//! Maximum-likelihood fitting with the mean and precision scale profiled out.
//!
//! The model is parameterized by the correlation shape and the
//! noise-to-signal ratio `delta = tau^2 sigma^2`, so that with
//! `M = C + delta I` (`C` the covariance at `tau = 1`) the maximizing `mu`
//! and `tau` have closed forms.

use std::sync::Mutex;
use std::time::Instant;

use argmin::core::{CostFunction, Executor, State, TerminationReason};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use crate::data::GridField;
use crate::error::{Error, Result};
use crate::likelihood::{LoglikBreakdown, Method, Problem};
use crate::linalg::dot;
use crate::spectral::{Model, ModelParams, Shape};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Closed-form `(mu, tau)` at a fixed shape and noise ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub mu: f64,
    pub tau: f64,
    pub delta: f64,
    /// `delta / tau^2`.
    pub sigma2: f64,
    pub loglik: LoglikBreakdown,
}

/// Profiled loglikelihood of `problem` for the unit-`tau` shape and noise ratio `delta`.
pub fn profile_shape(problem: &Problem, shape: &Shape, delta: f64, method: &Method) -> Result<Profile> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidParams(format!("delta must be >= 0, got {delta}")));
    }
    let unit = Model::new(shape.clone(), 1.0, delta, 0.0)?;
    let solver = problem.solver(&unit, method)?;
    let y = problem.y();
    let n = y.len();
    let w1 = solver.solve(&vec![1.0; n]);
    let wy = solver.solve(y);
    let denom: f64 = w1.iter().sum();
    if !(denom > 0.0) {
        return Err(Error::NotPositiveDefinite {
            what: "profiled covariance",
            pivot: 0,
            value: denom,
            diagnostic: "1^T M^-1 1 <= 0".into(),
        });
    }
    let mu = wy.iter().sum::<f64>() / denom;
    let r: Vec<f64> = y.iter().map(|v| v - mu).collect();
    let wr: Vec<f64> = wy.iter().zip(&w1).map(|(a, b)| a - mu * b).collect();
    let q = dot(&r, &wr);
    if !(q > 0.0) {
        return Err(Error::InvalidInput("observations are constant under the model".into()));
    }
    let tau2 = n as f64 / q;
    let logdet = solver.logdet() - n as f64 * tau2.ln();
    let mut loglik = LoglikBreakdown::new(logdet, n as f64, n, &method.name());
    loglik.loglik = -0.5 * n as f64 * (LN_2PI + 1.0) - 0.5 * logdet;
    Ok(Profile {
        mu,
        tau: tau2.sqrt(),
        delta,
        sigma2: delta / tau2,
        loglik,
    })
}

/// Profiled loglikelihood at `(kappa, nu, delta)`.
pub fn profile_closed_forms(
    kappa: f64,
    nu: u32,
    delta: f64,
    data: &GridField,
    method: &Method,
    j: usize,
) -> Result<Profile> {
    let problem = Problem::new(data)?.with_j(j);
    profile_shape(&problem, &Shape::Matern { kappa, nu }, delta, method)
}

/// Simplex search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    /// Convergence tolerance on the spread of function values over the simplex.
    pub tol: f64,
    pub max_iter: u64,
    pub log_kappa0: f64,
    /// Starting `log delta`; by default `log(0.01 K_C(0))` at the starting kappa.
    pub log_delta0: Option<f64>,
    /// Initial simplex edge on the log scale.
    pub step: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
            log_kappa0: 0.1f64.ln(),
            log_delta0: None,
            step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub log_kappa: f64,
    pub log_delta: Option<f64>,
    /// `-inf` where the evaluation failed.
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub delta: f64,
    pub loglik: LoglikBreakdown,
    pub iterations: u64,
    pub converged: bool,
    pub method: String,
    pub trace: Vec<TracePoint>,
    /// Seconds.
    pub wall_time: f64,
}

struct Objective<'a> {
    problem: &'a Problem,
    nu: u32,
    method: &'a Method,
    nugget: bool,
    trace: &'a Mutex<Vec<TracePoint>>,
}

impl Objective<'_> {
    fn point(&self, x: &[f64]) -> (f64, f64) {
        (x[0].exp(), if self.nugget { x[1].exp() } else { 0.0 })
    }

    fn eval(&self, x: &[f64]) -> Result<Profile> {
        let (kappa, delta) = self.point(x);
        if !(kappa.is_finite() && delta.is_finite()) {
            return Err(Error::InvalidParams("parameters overflowed".into()));
        }
        profile_shape(self.problem, &Shape::Matern { kappa, nu: self.nu }, delta, self.method)
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let ll = match self.eval(x) {
            Ok(p) if p.loglik.loglik.is_finite() => p.loglik.loglik,
            _ => f64::NEG_INFINITY,
        };
        self.trace.lock().expect("trace poisoned").push(TracePoint {
            log_kappa: x[0],
            log_delta: self.nugget.then(|| x[1]),
            loglik: ll,
        });
        Ok(-ll)
    }
}

/// Maximizes the profiled loglikelihood over `log kappa` (and `log delta`
/// when `nugget`) at fixed integer `nu`.
pub fn fit(data: &GridField, nu: u32, method: &Method, nugget: bool, j: usize, cfg: &OptConfig) -> Result<FitResult> {
    let problem = Problem::new(data)?.with_j(j);
    fit_problem(&problem, nu, method, nugget, cfg)
}

/// [`fit`] on a prepared problem.
pub fn fit_problem(problem: &Problem, nu: u32, method: &Method, nugget: bool, cfg: &OptConfig) -> Result<FitResult> {
    let start = Instant::now();
    if nugget && method.is_approximate() && !matches!(method, Method::IndBlocks { .. }) {
        return Err(Error::InvalidParams(format!(
            "the {} approximation is defined without a nugget",
            method.name()
        )));
    }
    if !(cfg.tol >= 0.0 && cfg.step > 0.0) {
        return Err(Error::InvalidInput("tolerance must be >= 0 and step > 0".into()));
    }
    let mut x0 = vec![cfg.log_kappa0];
    if nugget {
        let d0 = match cfg.log_delta0 {
            Some(v) => v,
            None => {
                let unit = Model::new(Shape::Matern { kappa: cfg.log_kappa0.exp(), nu }, 1.0, 0.0, 0.0)?;
                (0.01 * problem.table(&unit)?.k0()).ln()
            }
        };
        x0.push(d0);
    }
    let mut simplex = vec![x0.clone()];
    for k in 0..x0.len() {
        let mut v = x0.clone();
        v[k] += cfg.step;
        simplex.push(v);
    }
    let trace = Mutex::new(Vec::new());
    let objective = Objective {
        problem,
        nu,
        method,
        nugget,
        trace: &trace,
    };
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(cfg.tol)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let res = Executor::new(objective, solver)
        .configure(|s| s.max_iters(cfg.max_iter))
        .run()
        .map_err(|e| Error::InvalidInput(format!("optimizer failed: {e}")))?;
    let iterations = res.state().get_iter();
    let converged = matches!(res.state().get_termination_reason(), Some(TerminationReason::SolverConverged));
    let scratch = Mutex::new(Vec::new());
    let objective = Objective {
        problem,
        nu,
        method,
        nugget,
        trace: &scratch,
    };
    let trace = trace.into_inner().expect("trace poisoned");
    let best = trace
        .iter()
        .filter(|t| t.loglik.is_finite())
        .max_by(|a, b| a.loglik.total_cmp(&b.loglik))
        .ok_or_else(|| Error::InvalidInput("no parameter value could be evaluated".into()))?;
    let mut x = vec![best.log_kappa];
    x.extend(best.log_delta);
    let profile = objective.eval(&x)?;
    let (kappa, _) = objective.point(&x);
    let params = ModelParams::new(profile.tau, kappa, nu, profile.sigma2, profile.mu)?;
    let mut loglik = profile.loglik;
    loglik.wall_time = start.elapsed().as_secs_f64();
    Ok(FitResult {
        params,
        delta: profile.delta,
        loglik,
        iterations,
        converged,
        method: method.name(),
        trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
