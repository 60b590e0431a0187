use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use gridmrf_core::data::GridField;
use gridmrf_core::estimate::{fit_problem, OptConfig};
use gridmrf_core::lattice::GridMask;
use gridmrf_core::likelihood::{Method, Problem};
use gridmrf_core::oracle::{delta_j, dense_loglik, DEFAULT_J_HI, MAX_DENSE_LOGLIK};
use gridmrf_core::predict::{cond_sim, krige as krige_targets, PredictionRequest};
use gridmrf_core::spectral::{covariance_table, unconditional_sim, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::args::{
    parse_fit_method, parse_list, parse_method, CondsimArgs, CovArgs, FitArgs, KrigeArgs, LoglikArgs, SimulateArgs,
};
use crate::gridfile::{read_grid, write_bin, write_grid};
use crate::record::RunRecord;
use crate::usage;

/// `path` with `suffix` appended to the file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn emit(record: &RunRecord, out: Option<&Path>) -> Result<()> {
    record.print()?;
    if let Some(p) = out {
        record.write(p)?;
    }
    Ok(())
}

pub fn cov(a: CovArgs) -> Result<()> {
    let start = Instant::now();
    let params = ModelParams::latent(a.tau, a.kappa, a.nu)?;
    let table = covariance_table(&params, (a.n1, a.n2), a.j)?;
    let mut record = RunRecord::new("cov", &a)?;
    record.time("table", start.elapsed().as_secs_f64());
    let mut result = json!({
        "k0": table.k0(),
        "torus": table.dims(),
    });
    if let Some(out) = &a.out {
        // rows h1 = 0..n1, columns h2 = -(n2-1)..n2
        let w = 2 * a.n2 - 1;
        let mut v = Vec::with_capacity(a.n1 * w);
        for h1 in 0..a.n1 as i64 {
            for h2 in 1 - a.n2 as i64..a.n2 as i64 {
                v.push(table.get(h1, h2));
            }
        }
        let meta = json!({
            "rows": "h1 = 0 .. n1-1",
            "cols": "h2 = -(n2-1) .. n2-1",
            "k0": table.k0(),
            "params": params,
            "J": a.j,
        });
        write_bin(out, (a.n1, w), &v, Some(meta))?;
        result["table"] = json!(out);
    }
    if a.check {
        let t = Instant::now();
        let d = delta_j(&params, (a.n1, a.n2), a.j)?;
        record.time("check", t.elapsed().as_secs_f64());
        eprintln!("K(0) = {:e}, delta_J = {d:e}", table.k0());
        result["delta_j"] = json!(d);
    }
    record.set_result(result)?;
    record.time("total", start.elapsed().as_secs_f64());
    emit(&record, None)
}

pub fn loglik(a: LoglikArgs) -> Result<()> {
    let start = Instant::now();
    let data = read_grid(&a.data)?;
    let params = a.model.params()?;
    let method = parse_method(&a.method, &a.blocks)?;
    let problem = Problem::new(&data)?.with_j(a.j).with_m_cap(a.m_cap);
    let model = params.model();
    let b = problem.loglik(&model, &method)?;
    let mut record = RunRecord::new("loglik", &a)?;
    record.time("loglik", b.wall_time);
    let mut result = json!({ "loglik": b, "n_obs": data.n_obs() });
    if matches!(method, Method::Exact | Method::FullQ | Method::Lean) {
        result["m_n"] = json!(problem.m_n(&model)?);
    }
    if a.verify {
        if data.n_obs() <= MAX_DENSE_LOGLIK {
            let t = Instant::now();
            let d = dense_loglik(&params, &data, DEFAULT_J_HI)?;
            record.time("verify", t.elapsed().as_secs_f64());
            let abs = (b.loglik - d.loglik).abs();
            result["verify"] = json!({
                "dense": d,
                "abs_diff": abs,
                "rel_diff": abs / d.loglik.abs().max(f64::MIN_POSITIVE),
            });
        } else {
            result["verify"] = json!({
                "skipped": format!("{} observations exceed the dense limit {MAX_DENSE_LOGLIK}", data.n_obs()),
            });
        }
    }
    record.set_result(result)?;
    record.time("total", start.elapsed().as_secs_f64());
    emit(&record, a.out.as_deref())
}

pub fn fit(a: FitArgs) -> Result<()> {
    let start = Instant::now();
    let data = read_grid(&a.data)?;
    let nus: Vec<u32> = parse_list(&a.nu, "nu")?;
    let (method, nugget) = parse_fit_method(&a.method, a.nugget, &a.blocks)?;
    ensure!(a.kappa0 > 0.0, usage("kappa0 must be positive"));
    let cfg = OptConfig {
        tol: a.opt_tol,
        max_iter: a.max_iter,
        log_kappa0: a.kappa0.ln(),
        ..OptConfig::default()
    };
    let problem = Problem::new(&data)?.with_j(a.j).with_m_cap(a.m_cap);
    let mut fits = Vec::new();
    for &nu in &nus {
        let f = fit_problem(&problem, nu, &method, nugget, &cfg).with_context(|| format!("fitting nu = {nu}"))?;
        eprintln!(
            "nu = {nu}: loglik {:.6}, kappa {:.6}, {} iterations{}",
            f.loglik.loglik,
            f.params.kappa,
            f.iterations,
            if f.converged { "" } else { " (not converged)" }
        );
        fits.push(f);
    }
    // approximate fits are compared on the exact likelihood at their estimates
    let exact: Vec<Option<f64>> = fits
        .iter()
        .map(|f| {
            if !method.is_approximate() {
                return Some(f.loglik.loglik);
            }
            match problem.loglik(&f.params.model(), &Method::Exact) {
                Ok(b) => Some(b.loglik),
                Err(e) => {
                    eprintln!("nu = {}: exact loglik at the estimates unavailable: {e}", f.params.nu);
                    None
                }
            }
        })
        .collect();
    let best = exact
        .iter()
        .zip(&fits)
        .map(|(e, f)| e.unwrap_or(f.loglik.loglik))
        .fold(f64::NEG_INFINITY, f64::max);
    let best_nu = fits
        .iter()
        .zip(&exact)
        .max_by(|x, y| x.1.unwrap_or(x.0.loglik.loglik).total_cmp(&y.1.unwrap_or(y.0.loglik.loglik)))
        .map(|(f, _)| f.params.nu)
        .expect("at least one fit");
    let reference = a.reference_loglik.unwrap_or(best);
    let rows: Vec<_> = fits
        .iter()
        .zip(&exact)
        .map(|(f, e)| {
            json!({
                "method": f.method,
                "nugget": nugget,
                "nu": f.params.nu,
                "mu": f.params.mu,
                "tau": f.params.tau,
                "kappa": f.params.kappa,
                "sigma": f.params.sigma2.sqrt(),
                "delta_loglik": e.map(|v| v - reference),
                "loglik": f.loglik.loglik,
                "exact_loglik": e,
                "minutes": f.wall_time / 60.0,
                "converged": f.converged,
                "iterations": f.iterations,
            })
        })
        .collect();
    let mut record = RunRecord::new("fit", &a)?;
    record.set_result(json!({
        "rows": rows,
        "best_nu": best_nu,
        "reference_loglik": reference,
        "fits": fits,
    }))?;
    record.time("total", start.elapsed().as_secs_f64());
    emit(&record, a.out.as_deref())
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let start = Instant::now();
    let params = a.model.params()?;
    ensure!(
        (0.0..1.0).contains(&a.missing_frac),
        usage("missing-frac must lie in [0, 1)")
    );
    let mask = if let Some(p) = &a.mask {
        let m = read_grid(p)?.mask()?;
        ensure!(m.dims() == (a.n1, a.n2), usage("mask grid dimensions differ from n1 x n2"));
        m
    } else if a.missing_frac > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        rng.set_stream(1);
        let obs: Vec<bool> = (0..a.n1 * a.n2).map(|_| rng.random::<f64>() >= a.missing_frac).collect();
        GridMask::new(a.n1, a.n2, obs)?
    } else {
        GridMask::complete(a.n1, a.n2)?
    };
    let y = unconditional_sim(&params, &mask, a.j, a.seed)?;
    let field = GridField::from_observations(&mask, &y)?;
    write_grid(&a.out, &field)?;
    let mut record = RunRecord::new("simulate", &a)?.with_seed(a.seed);
    record.set_result(json!({ "out": a.out, "n_obs": field.n_obs(), "dims": field.dims() }))?;
    record.time("total", start.elapsed().as_secs_f64());
    emit(&record, Some(&with_suffix(&a.out, ".json")))
}

/// Target cells from a `row col` file, or every missing cell of `data`.
pub fn read_targets(path: Option<&Path>, data: &GridField) -> Result<Vec<(usize, usize)>> {
    let Some(path) = path else {
        let (_, n2) = data.dims();
        let t: Vec<_> = (0..data.values().len())
            .filter(|&k| data.values()[k].is_nan())
            .map(|k| (k / n2, k % n2))
            .collect();
        ensure!(!t.is_empty(), usage("the data have no missing cells; give --targets"));
        return Ok(t);
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut targets = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
        let mut next = || -> Result<usize> {
            it.next()
                .and_then(|s| s.parse().ok())
                .with_context(|| format!("{} line {}: expected `row col`", path.display(), no + 1))
        };
        targets.push((next()?, next()?));
    }
    ensure!(!targets.is_empty(), "{} lists no targets", path.display());
    Ok(targets)
}

fn covering_dims(data: &GridField, targets: &[(usize, usize)]) -> (usize, usize) {
    targets
        .iter()
        .fold(data.dims(), |(a, b), &(r, c)| (a.max(r + 1), b.max(c + 1)))
}

pub fn krige(a: KrigeArgs) -> Result<()> {
    let start = Instant::now();
    let data = read_grid(&a.data)?;
    let params = a.model.params()?;
    let targets = read_targets(a.targets.targets.as_deref(), &data)?;
    let request = PredictionRequest {
        targets: targets.clone(),
        want_sd: a.sd || a.sd_out.is_some(),
        n_sims: a.n_sims,
        seed: a.seed,
    };
    let pred = krige_targets(&params, &data, &request, a.j)?;
    let (n1, n2) = covering_dims(&data, &targets);
    let mut means = data.enlarged(n1, n2).values().to_vec();
    for (&(r, c), &m) in targets.iter().zip(&pred.mean) {
        means[r * n2 + c] = m;
    }
    write_grid(&a.out, &GridField::new(n1, n2, means)?)?;
    if let (Some(p), Some(sd)) = (&a.sd_out, &pred.sd) {
        let mut v = vec![f64::NAN; n1 * n2];
        for (&(r, c), &s) in targets.iter().zip(sd) {
            v[r * n2 + c] = s;
        }
        write_grid(p, &GridField::new(n1, n2, v)?)?;
    }
    let mut record = RunRecord::new("krige", &a)?.with_seed(a.seed);
    record.set_result(json!({
        "out": a.out,
        "sd_out": a.sd_out,
        "n_targets": targets.len(),
        "sd_source": pred.sd_source,
    }))?;
    record.time("total", start.elapsed().as_secs_f64());
    emit(&record, Some(&with_suffix(&a.out, ".json")))
}

pub fn condsim(a: CondsimArgs) -> Result<()> {
    let start = Instant::now();
    let data = read_grid(&a.data)?;
    let params = a.model.params()?;
    let targets = read_targets(a.targets.targets.as_deref(), &data)?;
    let request = PredictionRequest {
        targets: targets.clone(),
        want_sd: false,
        n_sims: a.n_sims,
        seed: a.seed,
    };
    let draws = cond_sim(&params, &data, &request, a.j)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let (n1, n2) = covering_dims(&data, &targets);
    let base = data.enlarged(n1, n2);
    let mut files = Vec::with_capacity(draws.len());
    for (k, d) in draws.iter().enumerate() {
        let mut v = base.values().to_vec();
        for (&(r, c), &x) in targets.iter().zip(d) {
            v[r * n2 + c] = x;
        }
        let p = a.out_dir.join(format!("draw_{k:04}.txt"));
        write_grid(&p, &GridField::new(n1, n2, v)?)?;
        files.push(p);
    }
    let mut record = RunRecord::new("condsim", &a)?.with_seed(a.seed);
    record.set_result(json!({ "draws": files, "n_targets": targets.len() }))?;
    record.time("total", start.elapsed().as_secs_f64());
    emit(&record, Some(&a.out_dir.join("record.json")))
}
