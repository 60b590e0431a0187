//! Plain-text grids with `NaN` for missing cells, and a flat binary variant.
//!
//! Text layout:
//!
//! ```text
//! n1 3
//! n2 4
//! missing NaN
//! 0.1 0.2 NaN 0.4
//! ...
//! ```
//!
//! Binary layout: `<name>.bin` holds `n1 * n2` little-endian `f64` values in
//! row-major order and `<name>.bin.json` holds `{"n1": .., "n2": .., ..}`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use gridmrf_core::data::GridField;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSidecar {
    pub n1: usize,
    pub n2: usize,
    pub dtype: String,
    pub order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

fn is_bin(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn parse_grid(text: &str) -> Result<GridField> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut header = |key: &str| -> Result<String> {
        let (no, line) = lines.next().with_context(|| format!("missing `{key}` header"))?;
        let mut it = line.split_whitespace();
        ensure!(it.next() == Some(key), "line {}: expected `{key} <value>`", no + 1);
        let v = it.next().with_context(|| format!("line {}: `{key}` has no value", no + 1))?;
        ensure!(it.next().is_none(), "line {}: trailing tokens after `{key}`", no + 1);
        Ok(v.to_string())
    };
    let n1: usize = header("n1")?.parse().context("n1 is not an integer")?;
    let n2: usize = header("n2")?.parse().context("n2 is not an integer")?;
    let sentinel = header("missing")?;
    ensure!(n1 > 0 && n2 > 0, "grid dimensions must be positive");
    let mut values = Vec::with_capacity(n1 * n2);
    let mut rows = 0;
    for (no, line) in lines {
        rows += 1;
        ensure!(rows <= n1, "line {}: more than n1 = {n1} data rows", no + 1);
        let before = values.len();
        for tok in line.split_whitespace() {
            let v = if tok == sentinel || tok.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                let v: f64 = tok
                    .parse()
                    .with_context(|| format!("line {}: `{tok}` is not a number", no + 1))?;
                ensure!(v.is_finite(), "line {}: non-finite value `{tok}`", no + 1);
                v
            };
            values.push(v);
        }
        ensure!(
            values.len() - before == n2,
            "line {}: expected {n2} values, found {}",
            no + 1,
            values.len() - before
        );
    }
    ensure!(rows == n1, "expected {n1} data rows, found {rows}");
    Ok(GridField::new(n1, n2, values)?)
}

pub fn format_grid(field: &GridField) -> String {
    let (n1, n2) = field.dims();
    let mut out = format!("n1 {n1}\nn2 {n2}\nmissing NaN\n");
    for r in 0..n1 {
        for c in 0..n2 {
            if c > 0 {
                out.push(' ');
            }
            let v = field.get(r, c);
            if v.is_nan() {
                out.push_str("NaN");
            } else {
                // Display is the shortest representation that round-trips
                write!(out, "{v}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

/// Reads a text grid, or a binary grid when the extension is `.bin`.
pub fn read_grid(path: &Path) -> Result<GridField> {
    if is_bin(path) {
        let side: BinSidecar = serde_json::from_slice(
            &fs::read(sidecar_path(path)).with_context(|| format!("reading sidecar of {}", path.display()))?,
        )?;
        ensure!(side.dtype == "f64le" && side.order == "row-major", "unsupported binary layout");
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        ensure!(bytes.len() == 8 * side.n1 * side.n2, "binary grid has the wrong size");
        let values = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        return Ok(GridField::new(side.n1, side.n2, values)?);
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_grid(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_grid(path: &Path, field: &GridField) -> Result<()> {
    if is_bin(path) {
        return write_bin(path, field.dims(), field.values(), None);
    }
    fs::write(path, format_grid(field)).with_context(|| format!("writing {}", path.display()))
}

/// Flat binary array with a JSON sidecar.
pub fn write_bin(path: &Path, dims: (usize, usize), values: &[f64], meta: Option<serde_json::Value>) -> Result<()> {
    if values.len() != dims.0 * dims.1 {
        bail!("{} values for a {}x{} array", values.len(), dims.0, dims.1);
    }
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let side = BinSidecar {
        n1: dims.0,
        n2: dims.1,
        dtype: "f64le".into(),
        order: "row-major".into(),
        meta,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}
