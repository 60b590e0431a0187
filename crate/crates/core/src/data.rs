use crate::error::{Error, Result};
use crate::lattice::GridMask;

/// A rectangular field with `NaN` marking unobserved cells (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n1: usize,
    n2: usize,
    values: Vec<f64>,
}

impl GridField {
    /// `values` must be finite or `NaN`; infinities are rejected.
    pub fn new(n1: usize, n2: usize, values: Vec<f64>) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidInput(format!("grid dimensions must be >= 1, got {n1}x{n2}")));
        }
        if values.len() != n1 * n2 {
            return Err(Error::LengthMismatch {
                expected: n1 * n2,
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| v.is_infinite()) {
            return Err(Error::InvalidInput(format!(
                "cell ({}, {}) is infinite",
                k / n2,
                k % n2
            )));
        }
        Ok(Self { n1, n2, values })
    }

    /// Field with observations `y` (row-major order of the observed cells).
    pub fn from_observations(mask: &GridMask, y: &[f64]) -> Result<Self> {
        if y.len() != mask.n_obs() {
            return Err(Error::LengthMismatch {
                expected: mask.n_obs(),
                got: y.len(),
            });
        }
        let mut values = vec![f64::NAN; mask.n1() * mask.n2()];
        for (&(r, c), &v) in mask.cells().iter().zip(y) {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("observation at ({r}, {c}) is not finite")));
            }
            values[r * mask.n2() + c] = v;
        }
        Self::new(mask.n1(), mask.n2(), values)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.n2 + c]
    }

    pub fn mask(&self) -> Result<GridMask> {
        GridMask::new(self.n1, self.n2, self.values.iter().map(|v| !v.is_nan()).collect())
    }

    /// Observed values in row-major order.
    pub fn observations(&self) -> Vec<f64> {
        self.values.iter().copied().filter(|v| !v.is_nan()).collect()
    }

    pub fn n_obs(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn transpose(&self) -> GridField {
        let mut values = vec![0.0; self.values.len()];
        for r in 0..self.n1 {
            for c in 0..self.n2 {
                values[c * self.n1 + r] = self.values[r * self.n2 + c];
            }
        }
        GridField {
            n1: self.n2,
            n2: self.n1,
            values,
        }
    }

    /// Same field on a larger rectangle (new cells unobserved).
    pub fn enlarged(&self, n1: usize, n2: usize) -> GridField {
        let (n1, n2) = (n1.max(self.n1), n2.max(self.n2));
        let mut values = vec![f64::NAN; n1 * n2];
        for r in 0..self.n1 {
            values[r * n2..r * n2 + self.n2].copy_from_slice(&self.values[r * self.n2..(r + 1) * self.n2]);
        }
        GridField { n1, n2, values }
    }
}
