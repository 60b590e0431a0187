use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use gridmrf_core::likelihood::{Method, DEFAULT_J, DEFAULT_M_CAP};
use gridmrf_core::precision::Scheme;
use gridmrf_core::spectral::ModelParams;
use serde::Serialize;

use crate::usage;

#[derive(Debug, Parser)]
#[command(name = "gridmrf", version, about = "Exact likelihoods for Gaussian Markov random fields on incomplete grids")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, env = "GRIDMRF_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Covariance table on the grid lags.
    Cov(CovArgs),
    /// Loglikelihood of a grid file.
    Loglik(LoglikArgs),
    /// Maximum-likelihood fit with mu and tau profiled out.
    Fit(FitArgs),
    /// Unconditional simulation.
    Simulate(SimulateArgs),
    /// Kriging means (and standard deviations) at unobserved cells.
    Krige(KrigeArgs),
    /// Conditional simulations at unobserved cells.
    Condsim(CondsimArgs),
    /// Repeated fits of simulated complete grids.
    Simstudy(SimstudyArgs),
    /// Timing of likelihood evaluations over grid sizes.
    Benchmark(BenchmarkArgs),
    /// Convergence of the covariance sums in the oversampling factor.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 0)]
    pub nu: u32,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
}

impl ModelArgs {
    pub fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.tau, self.kappa, self.nu, self.sigma2, self.mu)?)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct CovArgs {
    #[arg(long, default_value_t = 0)]
    pub nu: u32,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long)]
    pub n1: usize,
    #[arg(long)]
    pub n2: usize,
    #[arg(long = "J", default_value_t = DEFAULT_J)]
    pub j: usize,
    /// Binary output (`.bin`, with a `.bin.json` sidecar).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also report the change to oversampling J + 1.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct LoglikArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// exact, fullq, lean, none, precision, periodic, indblocks or dense.
    #[arg(long, default_value = "exact")]
    pub method: String,
    /// Tile size for indblocks, `RxC`.
    #[arg(long, default_value = "32x32")]
    pub blocks: String,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "J", default_value_t = DEFAULT_J)]
    pub j: usize,
    #[arg(long, default_value_t = DEFAULT_M_CAP)]
    pub m_cap: usize,
    /// Compare with the dense reference (small problems only).
    #[arg(long)]
    pub verify: bool,
    /// JSON record output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// exact, exact-nugget, fullq, lean, none, precision, periodic or indblocks.
    #[arg(long, default_value = "exact")]
    pub method: String,
    /// Candidate smoothness values, comma separated.
    #[arg(long, default_value = "0")]
    pub nu: String,
    /// Estimate a nugget.
    #[arg(long)]
    pub nugget: bool,
    #[arg(long, default_value = "32x32")]
    pub blocks: String,
    #[arg(long = "J", default_value_t = DEFAULT_J)]
    pub j: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub opt_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: u64,
    #[arg(long, default_value_t = 0.1)]
    pub kappa0: f64,
    /// Reference loglikelihood for the reported difference (default: best fit).
    #[arg(long)]
    pub reference_loglik: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_M_CAP)]
    pub m_cap: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n1: usize,
    #[arg(long)]
    pub n2: usize,
    #[arg(long = "J", default_value_t = DEFAULT_J)]
    pub j: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of cells to leave unobserved, chosen at random.
    #[arg(long, default_value_t = 0.0)]
    pub missing_frac: f64,
    /// Copy the missing-cell pattern of this grid file.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Grid file output; the run record goes next to it with `.json` appended.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TargetArgs {
    /// Target cells, one `row col` pair per line (default: every missing cell).
    #[arg(long)]
    pub targets: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct KrigeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub targets: TargetArgs,
    #[arg(long = "J", default_value_t = DEFAULT_J)]
    pub j: usize,
    /// Also compute prediction standard deviations.
    #[arg(long)]
    pub sd: bool,
    /// Draws for standard deviations of large target sets.
    #[arg(long, default_value_t = 200)]
    pub n_sims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid of observations with means filled in at the targets.
    #[arg(long)]
    pub out: PathBuf,
    /// Grid of standard deviations at the targets.
    #[arg(long)]
    pub sd_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct CondsimArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub targets: TargetArgs,
    #[arg(long = "J", default_value_t = DEFAULT_J)]
    pub j: usize,
    #[arg(long, default_value_t = 1)]
    pub n_sims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `draw_NNNN.txt` grids and `record.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct SimstudyArgs {
    #[arg(long, default_value_t = 0)]
    pub nu: u32,
    #[arg(long, default_value = "0.2,0.1,0.05")]
    pub kappa_list: String,
    #[arg(long, default_value = "100x100")]
    pub grid: String,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value = "exact,none,precision,periodic")]
    pub methods: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "J", default_value_t = DEFAULT_J)]
    pub j: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub opt_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: u64,
    /// CSV output; the run record goes next to it with `.json` appended.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct BenchmarkArgs {
    /// Side lengths of the square grids.
    #[arg(long, default_value = "100,150,200,250,300")]
    pub sizes: String,
    #[arg(long, default_value = "0,1")]
    pub nu: String,
    #[arg(long, default_value = "0,0.01")]
    pub sigma2: String,
    #[arg(long, default_value_t = 0.1)]
    pub kappa: f64,
    /// Timed evaluations per cell of the table (the minimum is reported).
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "J", default_value_t = DEFAULT_J)]
    pub j: usize,
    #[arg(long, default_value_t = DEFAULT_M_CAP)]
    pub m_cap: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct ConvergenceArgs {
    #[arg(long, default_value = "0,1")]
    pub nu: String,
    #[arg(long, default_value = "0.2,0.1,0.05")]
    pub kappa_list: String,
    #[arg(long, default_value = "100x100")]
    pub grid: String,
    #[arg(long, default_value_t = 5)]
    pub j_max: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    let v: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| usage(format!("{what}: `{t}` is not valid"))))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(usage(format!("{what}: empty list")));
    }
    Ok(v)
}

/// `64x48` -> (64, 48).
pub fn parse_dims(s: &str) -> Result<(usize, usize)> {
    let bad = || usage(format!("`{s}` is not of the form RxC"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || b == 0 {
        return Err(bad());
    }
    Ok((a, b))
}

/// Likelihood method from its tag.
pub fn parse_method(tag: &str, blocks: &str) -> Result<Method> {
    Ok(match tag {
        "exact" => Method::Exact,
        "fullq" => Method::FullQ,
        "lean" => Method::Lean,
        "none" => Method::Approx { scheme: Scheme::None },
        "precision" => Method::Approx { scheme: Scheme::Precision },
        "periodic" => Method::Approx { scheme: Scheme::Periodic },
        "indblocks" => {
            let (rows, cols) = parse_dims(blocks)?;
            Method::IndBlocks { rows, cols }
        }
        "dense" => Method::Dense,
        _ => return Err(usage(format!("unknown method `{tag}`"))),
    })
}

/// Fitting method and whether a nugget is estimated.
pub fn parse_fit_method(tag: &str, nugget: bool, blocks: &str) -> Result<(Method, bool)> {
    match tag {
        "exact-nugget" => Ok((Method::Exact, true)),
        "dense" => Err(usage("fitting with the dense method is not supported")),
        _ => Ok((parse_method(tag, blocks)?, nugget)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_dims() {
        assert_eq!(parse_list::<u32>("0, 1", "nu").unwrap(), vec![0, 1]);
        assert!(parse_list::<u32>("0,a", "nu").is_err());
        assert_eq!(parse_dims("64x48").unwrap(), (64, 48));
        assert!(parse_dims("64").is_err());
        assert!(parse_dims("0x3").is_err());
    }

    #[test]
    fn methods() {
        assert_eq!(parse_method("indblocks", "10x20").unwrap(), Method::IndBlocks { rows: 10, cols: 20 });
        assert_eq!(parse_method("periodic", "").unwrap().name(), "periodic");
        assert!(parse_method("bogus", "").is_err());
        assert_eq!(parse_fit_method("exact-nugget", false, "").unwrap(), (Method::Exact, true));
    }
}
