//! Exact Gaussian likelihoods, kriging and maximum-likelihood fitting for
//! stationary Gaussian Markov random fields observed on incomplete grids.

pub mod data;
pub mod error;
pub mod estimate;
pub mod lattice;
pub mod likelihood;
pub mod linalg;
pub mod oracle;
pub mod precision;
pub mod predict;
pub mod spectral;

pub use error::{Error, Result};
