use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use gridmrf_core::data::GridField;
use gridmrf_core::estimate::{fit_problem, profile_shape, OptConfig};
use gridmrf_core::lattice::GridMask;
use gridmrf_core::likelihood::{Method, Problem};
use gridmrf_core::oracle::delta_j;
use gridmrf_core::precision::Scheme;
use gridmrf_core::spectral::{unconditional_sim, ModelParams, Shape};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::{parse_dims, parse_fit_method, parse_list, BenchmarkArgs, ConvergenceArgs, SimstudyArgs};
use crate::commands::with_suffix;
use crate::record::RunRecord;

/// Settings of a simulation study on complete grids without a nugget.
#[derive(Debug, Clone, Serialize)]
pub struct StudyConfig {
    pub nu: u32,
    pub kappas: Vec<f64>,
    pub grid: (usize, usize),
    pub reps: usize,
    pub methods: Vec<String>,
    pub seed: u64,
    pub j: usize,
    pub opt: OptConfig,
}

/// One CSV row: a replicate fit (`kind = "rep"`) or a per-method summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub kind: String,
    pub nu: u32,
    pub kappa_true: f64,
    pub method: String,
    pub rep: Option<usize>,
    pub seed: Option<u64>,
    pub kappa_hat: Option<f64>,
    pub log_kappa_hat: Option<f64>,
    pub tau_hat: Option<f64>,
    pub mu_hat: Option<f64>,
    pub loglik: Option<f64>,
    /// Profiled loglikelihood at the generating kappa.
    pub loglik_truth: Option<f64>,
    pub converged: Option<bool>,
    pub iterations: Option<u64>,
    pub error: Option<String>,
    pub n: Option<usize>,
    pub mean_log_kappa: Option<f64>,
    pub se_log_kappa: Option<f64>,
    /// `(mean log kappa_hat - log kappa) / se`.
    pub z_bias: Option<f64>,
    /// Share of replicates with `kappa_hat > kappa`.
    pub frac_above: Option<f64>,
}

impl StudyRow {
    fn base(kind: &str, nu: u32, kappa: f64, method: &str) -> Self {
        Self {
            kind: kind.into(),
            nu,
            kappa_true: kappa,
            method: method.into(),
            rep: None,
            seed: None,
            kappa_hat: None,
            log_kappa_hat: None,
            tau_hat: None,
            mu_hat: None,
            loglik: None,
            loglik_truth: None,
            converged: None,
            iterations: None,
            error: None,
            n: None,
            mean_log_kappa: None,
            se_log_kappa: None,
            z_bias: None,
            frac_above: None,
        }
    }
}

/// Seed of replicate `rep` at the `k`-th kappa.
pub fn replicate_seed(seed: u64, k: usize, rep: usize) -> u64 {
    seed.wrapping_add((k as u64) << 32).wrapping_add(rep as u64)
}

fn replicate(cfg: &StudyConfig, methods: &[Method], k: usize, rep: usize) -> Result<Vec<StudyRow>> {
    let kappa = cfg.kappas[k];
    let seed = replicate_seed(cfg.seed, k, rep);
    let truth = ModelParams::new(1.0, kappa, cfg.nu, 0.0, 0.0)?;
    let mask = GridMask::complete(cfg.grid.0, cfg.grid.1)?;
    let y = unconditional_sim(&truth, &mask, cfg.j, seed)?;
    let data = GridField::from_observations(&mask, &y)?;
    let problem = Problem::new(&data)?.with_j(cfg.j).with_workers(1);
    let mut rows = Vec::new();
    for (tag, method) in cfg.methods.iter().zip(methods) {
        let mut row = StudyRow::base("rep", cfg.nu, kappa, tag);
        row.rep = Some(rep);
        row.seed = Some(seed);
        row.loglik_truth = profile_shape(&problem, &Shape::Matern { kappa, nu: cfg.nu }, 0.0, method)
            .ok()
            .map(|p| p.loglik.loglik);
        match fit_problem(&problem, cfg.nu, method, false, &cfg.opt) {
            Ok(f) => {
                row.kappa_hat = Some(f.params.kappa);
                row.log_kappa_hat = Some(f.params.kappa.ln());
                row.tau_hat = Some(f.params.tau);
                row.mu_hat = Some(f.params.mu);
                row.loglik = Some(f.loglik.loglik);
                row.converged = Some(f.converged);
                row.iterations = Some(f.iterations);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Replicate rows ordered by (kappa, replicate, method), followed by one
/// summary row per (kappa, method). Replicates run in parallel; the output
/// does not depend on the thread count.
pub fn run_simstudy(cfg: &StudyConfig) -> Result<Vec<StudyRow>> {
    let methods: Vec<Method> = cfg
        .methods
        .iter()
        .map(|t| parse_fit_method(t, false, "32x32").map(|m| m.0))
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..cfg.kappas.len())
        .flat_map(|k| (0..cfg.reps).map(move |r| (k, r)))
        .collect();
    let per_rep: Vec<Vec<StudyRow>> = tasks
        .par_iter()
        .map(|&(k, r)| replicate(cfg, &methods, k, r))
        .collect::<Result<_>>()?;
    let mut rows: Vec<StudyRow> = per_rep.into_iter().flatten().collect();
    let mut summaries = Vec::new();
    for &kappa in &cfg.kappas {
        for tag in &cfg.methods {
            summaries.push(summarize(&rows, cfg.nu, kappa, tag));
        }
    }
    rows.extend(summaries);
    Ok(rows)
}

fn summarize(rows: &[StudyRow], nu: u32, kappa: f64, method: &str) -> StudyRow {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.kind == "rep" && r.kappa_true == kappa && r.method == method)
        .filter_map(|r| r.log_kappa_hat)
        .collect();
    let mut s = StudyRow::base("summary", nu, kappa, method);
    let n = v.len();
    s.n = Some(n);
    if n > 0 {
        let mean = v.iter().sum::<f64>() / n as f64;
        s.mean_log_kappa = Some(mean);
        s.frac_above = Some(v.iter().filter(|&&x| x > kappa.ln()).count() as f64 / n as f64);
        if n > 1 {
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            s.se_log_kappa = Some(se);
            s.z_bias = Some((mean - kappa.ln()) / se);
        }
    }
    s
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn simstudy(a: SimstudyArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = StudyConfig {
        nu: a.nu,
        kappas: parse_list(&a.kappa_list, "kappa-list")?,
        grid: parse_dims(&a.grid)?,
        reps: a.reps,
        methods: parse_list(&a.methods, "methods")?,
        seed: a.seed,
        j: a.j,
        opt: OptConfig {
            tol: a.opt_tol,
            max_iter: a.max_iter,
            ..OptConfig::default()
        },
    };
    let rows = run_simstudy(&cfg)?;
    write_csv(&a.out, &rows)?;
    let mut record = RunRecord::new("simstudy", &a)?.with_seed(a.seed);
    let summaries: Vec<_> = rows.iter().filter(|r| r.kind == "summary").collect();
    record.set_result(json!({
        "csv": a.out,
        "seed_rule": "replicate seed = seed + (kappa index << 32) + replicate",
        "summaries": summaries,
    }))?;
    record.time("total", start.elapsed().as_secs_f64());
    record.print()?;
    record.write(&with_suffix(&a.out, ".json"))
}

/// Timing table: one row per grid side, one column per (nu, method, sigma2).
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkTable {
    pub columns: Vec<String>,
    pub sizes: Vec<usize>,
    /// `seconds[row][col]`; `None` where the evaluation failed.
    pub seconds: Vec<Vec<Option<f64>>>,
    pub logliks: Vec<Vec<Option<f64>>>,
    pub errors: Vec<String>,
}

impl BenchmarkTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.seconds.iter().map(|r| r[c]).collect())
    }
}

pub fn benchmark_column(nu: u32, approximate: bool, sigma2: f64) -> String {
    if approximate {
        format!("nu{nu}_approx_s{sigma2}")
    } else {
        format!("nu{nu}_exact_s{sigma2}")
    }
}

/// Least-squares slope of `log y` on `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Times one evaluation per cell (minimum over `reps`) on simulated
/// complete square grids; each evaluation starts from a fresh problem.
#[allow(clippy::too_many_arguments)]
pub fn run_benchmark(
    sizes: &[usize],
    nus: &[u32],
    sigma2s: &[f64],
    kappa: f64,
    reps: usize,
    seed: u64,
    j: usize,
    m_cap: usize,
) -> Result<BenchmarkTable> {
    let mut columns = Vec::new();
    let mut specs = Vec::new();
    for &nu in nus {
        columns.push(benchmark_column(nu, true, 0.0));
        specs.push((nu, Method::Approx { scheme: Scheme::None }, 0.0));
        for &s2 in sigma2s {
            columns.push(benchmark_column(nu, false, s2));
            specs.push((nu, Method::Exact, s2));
        }
    }
    let mut table = BenchmarkTable {
        columns,
        sizes: sizes.to_vec(),
        seconds: Vec::new(),
        logliks: Vec::new(),
        errors: Vec::new(),
    };
    for &n in sizes {
        let mask = GridMask::complete(n, n)?;
        let truth = ModelParams::new(1.0, kappa, 0, 0.0, 0.0)?;
        let data = GridField::from_observations(&mask, &unconditional_sim(&truth, &mask, j, seed)?)?;
        let mut secs = Vec::new();
        let mut lls = Vec::new();
        for (nu, method, s2) in &specs {
            let params = ModelParams::new(1.0, kappa, *nu, *s2, 0.0)?;
            let mut best: Option<(f64, f64)> = None;
            for _ in 0..reps.max(1) {
                let t = Instant::now();
                let r = Problem::new(&data)
                    .and_then(|p| p.with_j(j).with_m_cap(m_cap).loglik(&params.model(), method));
                let dt = t.elapsed().as_secs_f64();
                match r {
                    Ok(b) => best = Some(best.map_or((dt, b.loglik), |(d, l)| (d.min(dt), l))),
                    Err(e) => {
                        table.errors.push(format!("n = {n}, nu = {nu}, {}: {e}", method.name()));
                        break;
                    }
                }
            }
            secs.push(best.map(|b| b.0));
            lls.push(best.map(|b| b.1));
        }
        table.seconds.push(secs);
        table.logliks.push(lls);
    }
    Ok(table)
}

pub fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let start = Instant::now();
    let sizes: Vec<usize> = parse_list(&a.sizes, "sizes")?;
    let nus: Vec<u32> = parse_list(&a.nu, "nu")?;
    let sigma2s: Vec<f64> = parse_list(&a.sigma2, "sigma2")?;
    let table = run_benchmark(&sizes, &nus, &sigma2s, a.kappa, a.reps, a.seed, a.j, a.m_cap)?;
    let mut w = csv::Writer::from_path(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut header = vec!["n".to_string(), "cells".to_string()];
    header.extend(table.columns.iter().cloned());
    w.write_record(&header)?;
    for (n, row) in table.sizes.iter().zip(&table.seconds) {
        let mut rec = vec![n.to_string(), (n * n).to_string()];
        rec.extend(row.iter().map(|s| s.map_or_else(String::new, |v| format!("{v:.6}"))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let cells: Vec<f64> = table.sizes.iter().map(|&n| (n * n) as f64).collect();
    let slopes: serde_json::Map<String, serde_json::Value> = table
        .columns
        .iter()
        .filter_map(|c| {
            let col: Option<Vec<f64>> = table.column(c)?.into_iter().collect();
            let col = col.filter(|v| v.len() >= 2)?;
            Some((c.clone(), json!(loglog_slope(&cells, &col))))
        })
        .collect();
    let mut record = RunRecord::new("benchmark", &a)?.with_seed(a.seed);
    record.set_result(json!({ "csv": a.out, "table": table, "loglog_slope_vs_cells": slopes }))?;
    record.time("total", start.elapsed().as_secs_f64());
    record.print()?;
    record.write(&with_suffix(&a.out, ".json"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub nu: u32,
    pub kappa: f64,
    #[serde(rename = "J")]
    pub j: usize,
    pub delta_j: f64,
}

pub fn run_convergence(nus: &[u32], kappas: &[f64], grid: (usize, usize), j_max: usize) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::new();
    for &nu in nus {
        for &kappa in kappas {
            let params = ModelParams::latent(1.0, kappa, nu)?;
            for j in 1..=j_max {
                rows.push(ConvergenceRow {
                    nu,
                    kappa,
                    j,
                    delta_j: delta_j(&params, grid, j)?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn convergence(a: ConvergenceArgs) -> Result<()> {
    let start = Instant::now();
    let nus: Vec<u32> = parse_list(&a.nu, "nu")?;
    let kappas: Vec<f64> = parse_list(&a.kappa_list, "kappa-list")?;
    let rows = run_convergence(&nus, &kappas, parse_dims(&a.grid)?, a.j_max)?;
    write_csv(&a.out, &rows)?;
    let mut record = RunRecord::new("convergence", &a)?;
    record.set_result(json!({ "csv": a.out, "rows": rows }))?;
    record.time("total", start.elapsed().as_secs_f64());
    record.print()?;
    record.write(&with_suffix(&a.out, ".json"))
}
