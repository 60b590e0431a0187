use rustfft::num_complex::Complex64;

use super::fft::{smooth_size, Fft2};
use super::table::CovarianceTable;
use crate::error::{Error, Result};

/// Covariance products `sum_y K(x - y) v(y)` on an `n1 x n2` grid.
///
/// The lags of the grid (`|h_k| < n_k`) are laid out on a circulant of size
/// at least `2n - 1` per axis, so each product is exact with respect to the
/// table values up to FFT roundoff.
#[derive(Debug)]
pub struct CirculantEmbedding {
    grid: (usize, usize),
    dims: (usize, usize),
    fft: Fft2,
    kernel_hat: Vec<f64>,
}

impl CirculantEmbedding {
    pub fn new(table: &CovarianceTable) -> Self {
        Self::for_grid(table, table.grid())
    }

    /// Embedding for a grid other than the table's own (lags beyond the
    /// table's torus wrap).
    pub fn for_grid(table: &CovarianceTable, grid: (usize, usize)) -> Self {
        let (n1, n2) = grid;
        let d1 = smooth_size(2 * n1 - 1);
        let d2 = smooth_size(2 * n2 - 1);
        let lag = |i: usize, d: usize, n: usize| -> Option<i64> {
            if i < n {
                Some(i as i64)
            } else if i + n > d {
                Some(i as i64 - d as i64)
            } else {
                None
            }
        };
        let mut buf = vec![Complex64::default(); d1 * d2];
        for i in 0..d1 {
            let Some(h1) = lag(i, d1, n1) else { continue };
            for k in 0..d2 {
                if let Some(h2) = lag(k, d2, n2) {
                    buf[i * d2 + k] = Complex64::new(table.get(h1, h2), 0.0);
                }
            }
        }
        let fft = Fft2::new(d1, d2);
        fft.forward(&mut buf);
        let scale = 1.0 / (d1 * d2) as f64;
        // the kernel is even, so its transform is real
        let kernel_hat = buf.iter().map(|c| c.re * scale).collect();
        Self {
            grid,
            dims: (d1, d2),
            fft,
            kernel_hat,
        }
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn check(&self, cells: &[(usize, usize)]) -> Result<()> {
        for &(r, c) in cells {
            if r >= self.grid.0 || c >= self.grid.1 {
                return Err(Error::OutOfGrid {
                    row: r as i64,
                    col: c as i64,
                    n1: self.grid.0,
                    n2: self.grid.1,
                });
            }
        }
        Ok(())
    }

    fn convolve(&self, buf: &mut [Complex64]) {
        self.fft.forward(buf);
        for (b, &k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.fft.inverse(buf);
    }

    /// `out[t] = sum_s K(targets[t] - sources[s]) v[s]`.
    pub fn apply(&self, sources: &[(usize, usize)], v: &[f64], targets: &[(usize, usize)]) -> Result<Vec<f64>> {
        if v.len() != sources.len() {
            return Err(Error::LengthMismatch {
                expected: sources.len(),
                got: v.len(),
            });
        }
        self.check(sources)?;
        self.check(targets)?;
        let d2 = self.dims.1;
        let mut buf = vec![Complex64::default(); self.dims.0 * d2];
        for (&(r, c), &x) in sources.iter().zip(v) {
            buf[r * d2 + c].re += x;
        }
        self.convolve(&mut buf);
        Ok(targets.iter().map(|&(r, c)| buf[r * d2 + c].re).collect())
    }

    /// Two products with shared sources and targets in one transform pair
    /// (the kernel transform is real, so real and imaginary parts separate).
    pub fn apply_pair(
        &self,
        sources: &[(usize, usize)],
        u: &[f64],
        v: &[f64],
        targets: &[(usize, usize)],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        for x in [u, v] {
            if x.len() != sources.len() {
                return Err(Error::LengthMismatch {
                    expected: sources.len(),
                    got: x.len(),
                });
            }
        }
        self.check(sources)?;
        self.check(targets)?;
        let d2 = self.dims.1;
        let mut buf = vec![Complex64::default(); self.dims.0 * d2];
        for (k, &(r, c)) in sources.iter().enumerate() {
            buf[r * d2 + c] += Complex64::new(u[k], v[k]);
        }
        self.convolve(&mut buf);
        let a = targets.iter().map(|&(r, c)| buf[r * d2 + c].re).collect();
        let b = targets.iter().map(|&(r, c)| buf[r * d2 + c].im).collect();
        Ok((a, b))
    }
}

/// One-shot [`CirculantEmbedding::apply`].
pub fn circ_matvec(
    table: &CovarianceTable,
    v: &[f64],
    sources: &[(usize, usize)],
    targets: &[(usize, usize)],
) -> Result<Vec<f64>> {
    CirculantEmbedding::new(table).apply(sources, v, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::ModelParams;

    fn table(grid: (usize, usize)) -> CovarianceTable {
        let m = ModelParams::latent(1.0, 0.2, 0).unwrap().model();
        CovarianceTable::new(&m, grid, 3).unwrap()
    }

    fn all_cells(n1: usize, n2: usize) -> Vec<(usize, usize)> {
        (0..n1).flat_map(|r| (0..n2).map(move |c| (r, c))).collect()
    }

    #[test]
    fn single_point_gives_k0() {
        let t = table((3, 4));
        let out = circ_matvec(&t, &[1.0], &[(1, 2)], &[(1, 2)]).unwrap();
        assert!((out[0] - t.k0()).abs() < 1e-14);
    }

    #[test]
    fn matches_dense_product() {
        let t = table((4, 4));
        let cells = all_cells(4, 4);
        let v: Vec<f64> = (0..16).map(|k| ((k * 7 % 5) as f64) - 2.0).collect();
        let out = circ_matvec(&t, &v, &cells, &cells).unwrap();
        for (i, &a) in cells.iter().enumerate() {
            let dense: f64 = cells.iter().zip(&v).map(|(&b, &x)| t.cov(a, b) * x).sum();
            assert!((out[i] - dense).abs() <= 1e-10 * dense.abs().max(1e-3));
        }
    }

    #[test]
    fn rectangular_subsets_and_pair() {
        let t = table((5, 9));
        let emb = CirculantEmbedding::new(&t);
        let src = [(0, 0), (4, 8), (2, 3)];
        let tgt = [(4, 0), (0, 8), (1, 1), (2, 3)];
        let u = [1.0, -2.0, 0.5];
        let v = [0.3, 0.0, 4.0];
        let (a, b) = emb.apply_pair(&src, &u, &v, &tgt).unwrap();
        for (k, &x) in tgt.iter().enumerate() {
            let du: f64 = src.iter().zip(&u).map(|(&s, &w)| t.cov(x, s) * w).sum();
            let dv: f64 = src.iter().zip(&v).map(|(&s, &w)| t.cov(x, s) * w).sum();
            assert!((a[k] - du).abs() < 1e-13);
            assert!((b[k] - dv).abs() < 1e-13);
        }
    }

    #[test]
    fn linear() {
        let t = table((6, 5));
        let emb = CirculantEmbedding::new(&t);
        let cells = all_cells(6, 5);
        let u: Vec<f64> = (0..30).map(|k| (k as f64).sin()).collect();
        let v: Vec<f64> = (0..30).map(|k| (k as f64 * 0.3).cos()).collect();
        let (alpha, beta) = (1.7, -0.4);
        let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = emb.apply(&cells, &w, &cells).unwrap();
        let (mu, mv) = emb.apply_pair(&cells, &u, &v, &cells).unwrap();
        for k in 0..30 {
            assert!((lhs[k] - alpha * mu[k] - beta * mv[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_out_of_grid() {
        let t = table((3, 3));
        assert!(matches!(
            circ_matvec(&t, &[1.0], &[(3, 0)], &[(0, 0)]),
            Err(Error::OutOfGrid { .. })
        ));
    }
}
