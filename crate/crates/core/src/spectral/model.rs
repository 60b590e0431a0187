use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer lag `(row offset, column offset)`.
pub type Lag = (i32, i32);

/// Parameters of the stationary family
/// `f(w) = tau^-2 (kappa^2 + 4 - 2 cos w1 - 2 cos w2)^-(nu+1)`
/// plus a nugget variance and a constant mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tau: f64,
    pub kappa: f64,
    pub nu: u32,
    pub sigma2: f64,
    pub mu: f64,
}

impl ModelParams {
    pub fn new(tau: f64, kappa: f64, nu: u32, sigma2: f64, mu: f64) -> Result<Self> {
        let p = Self {
            tau,
            kappa,
            nu,
            sigma2,
            mu,
        };
        p.validate()?;
        Ok(p)
    }

    /// Zero-mean, no-nugget parameters.
    pub fn latent(tau: f64, kappa: f64, nu: u32) -> Result<Self> {
        Self::new(tau, kappa, nu, 0.0, 0.0)
    }

    /// `kappa = 0` is accepted here (the stencil is still well defined);
    /// anything that needs covariances rejects it through the spectrum.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidParams(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "kappa must be >= 0, got {}",
                self.kappa
            )));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "sigma2 must be >= 0, got {}",
                self.sigma2
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidParams(format!("mu must be finite, got {}", self.mu)));
        }
        Ok(())
    }

    pub fn model(&self) -> Model {
        Model::from(*self)
    }
}

/// Finite symmetric conditional-specification stencil `eta(h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    coeffs: BTreeMap<Lag, f64>,
}

impl Stencil {
    /// Builds a stencil, dropping exact zeros. Requires `eta(h) = eta(-h)`,
    /// `eta(0) > 0` and finite coefficients.
    pub fn new(coeffs: impl IntoIterator<Item = (Lag, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lag, v) in coeffs {
            if !v.is_finite() {
                return Err(Error::InvalidStencil(format!("non-finite coefficient at {lag:?}")));
            }
            *map.entry(lag).or_insert(0.0) += v;
        }
        map.retain(|_, v| *v != 0.0);
        let s = Self { coeffs: map };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.center() <= 0.0 {
            return Err(Error::InvalidStencil(format!(
                "eta(0) must be positive, got {}",
                self.center()
            )));
        }
        for (&(h1, h2), &v) in &self.coeffs {
            let mirror = self.get((-h1, -h2));
            if mirror != v {
                return Err(Error::InvalidStencil(format!(
                    "asymmetric: eta({h1},{h2}) = {v} but eta({},{}) = {mirror}",
                    -h1, -h2
                )));
            }
        }
        Ok(())
    }

    /// `eta(0) = c`, nothing else: independent N(0, 1/c) values.
    pub fn white_noise(c: f64) -> Result<Self> {
        Self::new([((0, 0), c)])
    }

    pub fn get(&self, lag: Lag) -> f64 {
        self.coeffs.get(&lag).copied().unwrap_or(0.0)
    }

    pub fn center(&self) -> f64 {
        self.get((0, 0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Lag, f64)> + '_ {
        self.coeffs.iter().map(|(&k, &v)| (k, v))
    }

    /// Nonzero lags other than the origin.
    pub fn neighbor_lags(&self) -> impl Iterator<Item = Lag> + '_ {
        self.coeffs.keys().copied().filter(|&h| h != (0, 0))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest `|h1|` and `|h2|` over the support.
    pub fn radius(&self) -> (usize, usize) {
        self.coeffs.keys().fold((0, 0), |(r1, r2), &(h1, h2)| {
            (r1.max(h1.unsigned_abs() as usize), r2.max(h2.unsigned_abs() as usize))
        })
    }

    /// `sum_h eta(h) exp(i w.h)`, real by symmetry.
    pub fn symbol(&self, w1: f64, w2: f64) -> f64 {
        self.iter()
            .map(|((h1, h2), v)| v * (w1 * h1 as f64 + w2 * h2 as f64).cos())
            .sum()
    }

    /// `sum_{h != 0} |eta(h)|`.
    pub fn off_center_abs_sum(&self) -> f64 {
        self.iter().filter(|(h, _)| *h != (0, 0)).map(|(_, v)| v.abs()).sum()
    }

    pub fn scaled(&self, c: f64) -> Stencil {
        Stencil {
            coeffs: self.coeffs.iter().map(|(&k, &v)| (k, v * c)).collect(),
        }
    }

    /// Discrete convolution; the symbol of the result is the product of symbols.
    pub fn convolve(&self, other: &Stencil) -> Stencil {
        let mut out: BTreeMap<Lag, f64> = BTreeMap::new();
        for (a, va) in self.iter() {
            for (b, vb) in other.iter() {
                *out.entry((a.0 + b.0, a.1 + b.1)).or_insert(0.0) += va * vb;
            }
        }
        out.retain(|_, v| *v != 0.0);
        Stencil { coeffs: out }
    }

    /// Swaps the roles of rows and columns.
    pub fn transpose(&self) -> Stencil {
        Stencil {
            coeffs: self.coeffs.iter().map(|(&(a, b), &v)| ((b, a), v)).collect(),
        }
    }

    /// True when both stencils have nonzeros at exactly the same lags.
    pub fn same_support(&self, other: &Stencil) -> bool {
        self.coeffs.len() == other.coeffs.len()
            && self.coeffs.keys().zip(other.coeffs.keys()).all(|(a, b)| a == b)
    }
}

/// The correlation structure at unit `tau`.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Matern { kappa: f64, nu: u32 },
    Custom(Stencil),
}

impl Shape {
    /// Stencil for `tau = 1`.
    pub fn unit_stencil(&self) -> Stencil {
        match self {
            Shape::Matern { kappa, nu } => {
                let base = Stencil {
                    coeffs: [
                        ((0, 0), kappa * kappa + 4.0),
                        ((1, 0), -1.0),
                        ((-1, 0), -1.0),
                        ((0, 1), -1.0),
                        ((0, -1), -1.0),
                    ]
                    .into_iter()
                    .collect(),
                };
                let mut s = base.clone();
                for _ in 0..*nu {
                    s = s.convolve(&base);
                }
                s
            }
            Shape::Custom(s) => s.clone(),
        }
    }

    /// Spectral density at unit `tau`. Nonpositive or non-finite values are
    /// reported by the caller.
    pub fn unit_density(&self, w1: f64, w2: f64) -> f64 {
        match self {
            Shape::Matern { kappa, nu } => {
                let s1 = (0.5 * w1).sin();
                let s2 = (0.5 * w2).sin();
                let base = kappa * kappa + 4.0 * (s1 * s1 + s2 * s2);
                base.powi(-(*nu as i32) - 1)
            }
            Shape::Custom(s) => 1.0 / s.symbol(w1, w2),
        }
    }

    /// Wrap-around distance beyond which covariances are below ~1e-17 of
    /// K(0). `None` when no decay rate is known.
    pub fn decay_length(&self) -> Option<f64> {
        match self {
            Shape::Matern { kappa, nu } if *kappa > 0.0 => {
                // cosh(a) = 1 + kappa^2/2 is the axial decay rate of the lattice Green's function
                let a = 2.0 * (0.5 * kappa).asinh();
                let target = 17.0 * std::f64::consts::LN_10;
                let mut d = target / a;
                for _ in 0..8 {
                    d = (target + *nu as f64 * (1.0 + d).ln()) / a;
                }
                Some(d)
            }
            Shape::Matern { .. } => None,
            Shape::Custom(s) if s.len() == 1 => Some(0.0),
            Shape::Custom(_) => None,
        }
    }

    pub fn transpose(&self) -> Shape {
        match self {
            Shape::Matern { .. } => self.clone(),
            Shape::Custom(s) => Shape::Custom(s.transpose()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Shape::Matern { kappa, .. } => {
                if !(kappa.is_finite() && *kappa >= 0.0) {
                    return Err(Error::InvalidParams(format!("kappa must be >= 0, got {kappa}")));
                }
                Ok(())
            }
            Shape::Custom(s) => s.validate(),
        }
    }
}

/// A complete model: shape, precision scale, nugget and mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub shape: Shape,
    pub tau: f64,
    pub sigma2: f64,
    pub mu: f64,
}

impl Model {
    pub fn new(shape: Shape, tau: f64, sigma2: f64, mu: f64) -> Result<Self> {
        let m = Self {
            shape,
            tau,
            sigma2,
            mu,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidParams(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "sigma2 must be >= 0, got {}",
                self.sigma2
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidParams("mu must be finite".into()));
        }
        Ok(())
    }

    /// `eta = tau^2 * unit stencil`.
    pub fn stencil(&self) -> Stencil {
        self.shape.unit_stencil().scaled(self.tau * self.tau)
    }

    pub fn density(&self, w1: f64, w2: f64) -> f64 {
        self.shape.unit_density(w1, w2) / (self.tau * self.tau)
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Model {
        Model {
            sigma2,
            ..self.clone()
        }
    }

    pub fn with_mu(&self, mu: f64) -> Model {
        Model { mu, ..self.clone() }
    }

    pub fn with_tau(&self, tau: f64) -> Model {
        Model { tau, ..self.clone() }
    }

    pub fn transpose(&self) -> Model {
        Model {
            shape: self.shape.transpose(),
            ..self.clone()
        }
    }

    pub fn params(&self) -> Option<ModelParams> {
        match self.shape {
            Shape::Matern { kappa, nu } => Some(ModelParams {
                tau: self.tau,
                kappa,
                nu,
                sigma2: self.sigma2,
                mu: self.mu,
            }),
            Shape::Custom(_) => None,
        }
    }
}

impl From<ModelParams> for Model {
    fn from(p: ModelParams) -> Self {
        Model {
            shape: Shape::Matern {
                kappa: p.kappa,
                nu: p.nu,
            },
            tau: p.tau,
            sigma2: p.sigma2,
            mu: p.mu,
        }
    }
}

/// `eta = tau^2 * b^{*(nu+1)}` with `b(0) = kappa^2 + 4` and `b(+-e_k) = -1`.
pub fn stencil_from_params(params: &ModelParams) -> Stencil {
    Model::from(*params).stencil()
}

/// Closed-form spectral density of the family.
pub fn spectral_density(params: &ModelParams, omega: (f64, f64)) -> Result<f64> {
    let f = Model::from(*params).density(omega.0, omega.1);
    if !f.is_finite() || f <= 0.0 {
        return Err(Error::SingularDensity(omega.0, omega.1));
    }
    Ok(f)
}
