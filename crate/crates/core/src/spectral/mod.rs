//! Model family, spectral densities, FFT-computed lattice covariances,
//! circulant covariance products and unconditional simulation.

mod circulant;
mod fft;
mod model;
mod sim;
mod table;

pub use circulant::{circ_matvec, CirculantEmbedding};
pub use model::{spectral_density, stencil_from_params, Lag, Model, ModelParams, Shape, Stencil};
pub use sim::{observe, unconditional_sim, FieldSampler};
pub use table::{covariance_table, padded_dims, CovarianceTable, TORUS_CAP};
