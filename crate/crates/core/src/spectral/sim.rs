use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use super::fft::Fft2;
use super::model::{Model, ModelParams};
use super::table::{padded_dims, sample_spectrum};
use crate::error::{Error, Result};
use crate::lattice::GridMask;

/// Unconditional sampler of the zero-mean latent field on an `n1 x n2` grid,
/// drawn exactly from the stationary process wrapped on the padded torus.
#[derive(Debug)]
pub struct FieldSampler {
    grid: (usize, usize),
    dims: (usize, usize),
    fft: Fft2,
    amplitude: Vec<f64>,
}

impl FieldSampler {
    pub fn new(model: &Model, grid: (usize, usize), j: usize) -> Result<Self> {
        if j < 2 {
            return Err(Error::InvalidInput("simulation needs oversampling J >= 2".into()));
        }
        if grid.0 == 0 || grid.1 == 0 {
            return Err(Error::InvalidInput("grid dimensions must be >= 1".into()));
        }
        model.validate()?;
        let dims = padded_dims(&model.shape, grid, j);
        let scale = 1.0 / (dims.0 * dims.1) as f64;
        let amplitude = sample_spectrum(model, dims)?
            .iter()
            .map(|f| (f.re * scale).sqrt())
            .collect();
        Ok(Self {
            grid,
            dims,
            fft: Fft2::new(dims.0, dims.1),
            amplitude,
        })
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn torus(&self) -> (usize, usize) {
        self.dims
    }

    /// Two independent latent fields over the whole grid (row-major), from
    /// the real and imaginary parts of one complex spectral draw.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut buf: Vec<Complex64> = self
            .amplitude
            .iter()
            .map(|&a| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(a * re, a * im)
            })
            .collect();
        self.fft.inverse(&mut buf);
        let (n1, n2) = self.grid;
        let d2 = self.dims.1;
        let mut a = Vec::with_capacity(n1 * n2);
        let mut b = Vec::with_capacity(n1 * n2);
        for r in 0..n1 {
            for c in &buf[r * d2..r * d2 + n2] {
                a.push(c.re);
                b.push(c.im);
            }
        }
        (a, b)
    }
}

/// Simulated observations `Y = mu + Z + eps` at the observed cells of `mask`
/// (row-major), reproducible from `seed`.
pub fn unconditional_sim(params: &ModelParams, mask: &GridMask, j: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let model = Model::from(*params);
    let sampler = FieldSampler::new(&model, mask.dims(), j)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (z, _) = sampler.sample_pair(&mut rng);
    Ok(observe(&z, mask, &model, &mut rng))
}

/// Restricts a full latent field to the observed cells, adding the mean and
/// nugget noise.
pub fn observe<R: Rng + ?Sized>(field: &[f64], mask: &GridMask, model: &Model, rng: &mut R) -> Vec<f64> {
    let n2 = mask.n2();
    let sd = model.sigma2.sqrt();
    mask.cells()
        .iter()
        .map(|&(r, c)| {
            let noise = if sd > 0.0 {
                sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            model.mu + field[r * n2 + c] + noise
        })
        .collect()
}
