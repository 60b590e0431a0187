use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::fft::{smooth_size, Fft2};
use super::model::{Model, ModelParams, Shape};
use crate::error::{Error, Result};

/// Upper bound per torus axis for the adaptive padding (the requested
/// `n * J` is always honored even if larger).
pub const TORUS_CAP: usize = 2048;

/// Extra wrap-around distance used when the shape has no known decay rate.
const FALLBACK_PAD: usize = 64;

/// Lattice covariances `K(h)` at every lag of a torus, from the Riemann sum
///
/// `K(h) = (N1 N2)^-1 sum_j f(w_j) exp(i w_j.h)`, `w_j = 2 pi (j1/N1, j2/N2)`
///
/// evaluated with one inverse FFT. `N = n J` for [`exact`](Self::exact);
/// [`new`](Self::new) pads the torus further so that wrap-around is below
/// double precision.
#[derive(Debug, Clone)]
pub struct CovarianceTable {
    shape: Shape,
    tau: f64,
    j: usize,
    grid: (usize, usize),
    dims: (usize, usize),
    values: Vec<f64>,
}

impl CovarianceTable {
    /// Table on the literal `(n1 J, n2 J)` torus.
    pub fn exact(model: &Model, grid: (usize, usize), j: usize) -> Result<Self> {
        check_grid(grid, j)?;
        Self::with_dims(model, grid, (grid.0 * j, grid.1 * j), j)
    }

    /// Table on the padded torus returned by [`padded_dims`].
    pub fn new(model: &Model, grid: (usize, usize), j: usize) -> Result<Self> {
        check_grid(grid, j)?;
        Self::with_dims(model, grid, padded_dims(&model.shape, grid, j), j)
    }

    pub fn with_dims(model: &Model, grid: (usize, usize), dims: (usize, usize), j: usize) -> Result<Self> {
        model.validate()?;
        let (d1, d2) = dims;
        if d1 == 0 || d2 == 0 {
            return Err(Error::InvalidInput("torus dimensions must be >= 1".into()));
        }
        let mut buf = sample_spectrum(model, dims)?;
        Fft2::new(d1, d2).inverse(&mut buf);
        let scale = 1.0 / (d1 * d2) as f64;
        let mut residue = 0.0f64;
        let mut values: Vec<f64> = buf
            .iter()
            .map(|c| {
                residue = residue.max(c.im.abs() * scale);
                c.re * scale
            })
            .collect();
        // enforce K(h) = K(-h) bitwise; FFT roundoff breaks it at ~1e-17
        for i in 0..d1 {
            let ni = (d1 - i) % d1;
            for k in 0..d2 {
                let nk = (d2 - k) % d2;
                let (a, b) = (i * d2 + k, ni * d2 + nk);
                if a < b {
                    let avg = 0.5 * (values[a] + values[b]);
                    values[a] = avg;
                    values[b] = avg;
                }
            }
        }
        let k0 = values[0];
        if !(k0 > 0.0) || residue >= 1e-10 * k0 {
            return Err(Error::ImaginaryResidue { residue, k0 });
        }
        Ok(Self {
            shape: model.shape.clone(),
            tau: model.tau,
            j,
            grid,
            dims,
            values,
        })
    }

    /// `K(h)` with the lag reduced modulo the torus.
    #[inline]
    pub fn get(&self, h1: i64, h2: i64) -> f64 {
        let i = h1.rem_euclid(self.dims.0 as i64) as usize;
        let k = h2.rem_euclid(self.dims.1 as i64) as usize;
        self.values[i * self.dims.1 + k]
    }

    /// Covariance between two cells.
    #[inline]
    pub fn cov(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        self.get(a.0 as i64 - b.0 as i64, a.1 as i64 - b.1 as i64)
    }

    pub fn k0(&self) -> f64 {
        self.values[0]
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    /// Row-major torus values, `values[i * N2 + k] = K(i, k)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Maximum `|K_self(h) - K_other(h)|` over lags with `|h_k| < grid_k`.
    pub fn max_lag_diff(&self, other: &CovarianceTable) -> f64 {
        let (n1, n2) = (self.grid.0 as i64, self.grid.1 as i64);
        let mut worst = 0.0f64;
        for h1 in -(n1 - 1)..n1 {
            for h2 in -(n2 - 1)..n2 {
                worst = worst.max((self.get(h1, h2) - other.get(h1, h2)).abs());
            }
        }
        worst
    }
}

fn check_grid(grid: (usize, usize), j: usize) -> Result<()> {
    if grid.0 == 0 || grid.1 == 0 {
        return Err(Error::InvalidInput("grid dimensions must be >= 1".into()));
    }
    if j == 0 {
        return Err(Error::InvalidInput("oversampling J must be >= 1".into()));
    }
    Ok(())
}

/// Spectrum sampled at the Fourier frequencies of a `dims` torus.
pub(crate) fn sample_spectrum(model: &Model, dims: (usize, usize)) -> Result<Vec<Complex64>> {
    let (d1, d2) = dims;
    let mut buf = Vec::with_capacity(d1 * d2);
    for j1 in 0..d1 {
        let w1 = 2.0 * PI * j1 as f64 / d1 as f64;
        for j2 in 0..d2 {
            let w2 = 2.0 * PI * j2 as f64 / d2 as f64;
            let f = model.density(w1, w2);
            if !f.is_finite() || f <= 0.0 {
                return Err(Error::SingularSpectrum(j1, j2));
            }
            buf.push(Complex64::new(f, 0.0));
        }
    }
    Ok(buf)
}

/// Torus size per axis: at least `n J` and `2n` (so lags of the grid never
/// collide), and at least `n + d` where `d` is the shape's decay length.
pub fn padded_dims(shape: &Shape, grid: (usize, usize), j: usize) -> (usize, usize) {
    let pad = shape
        .decay_length()
        .map(|d| d.ceil() as usize)
        .unwrap_or(FALLBACK_PAD);
    let axis = |n: usize| {
        let floor = (n * j).max(2 * n);
        let want = floor.max(n + pad);
        smooth_size(want.min(floor.max(TORUS_CAP)))
    };
    (axis(grid.0), axis(grid.1))
}

/// Padded-torus table for the parametric family.
pub fn covariance_table(params: &ModelParams, grid: (usize, usize), j: usize) -> Result<CovarianceTable> {
    CovarianceTable::new(&Model::from(*params), grid, j)
}
