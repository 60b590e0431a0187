use thiserror::Error;

/// Errors produced by the likelihood machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no observations")]
    NoObservations,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("location ({row}, {col}) lies outside the {n1}x{n2} grid")]
    OutOfGrid {
        row: i64,
        col: i64,
        n1: usize,
        n2: usize,
    },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid stencil: {0}")]
    InvalidStencil(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("spectral density singular at omega = ({0}, {1})")]
    SingularDensity(f64, f64),

    #[error("singular spectrum sample at frequency index ({0}, {1})")]
    SingularSpectrum(usize, usize),

    #[error("covariance table imaginary residue {residue:e} exceeds 1e-10 * K(0) = {k0:e}")]
    ImaginaryResidue { residue: f64, k0: f64 },

    #[error("{what} is not positive definite: pivot {pivot} = {value:e} ({diagnostic})")]
    NotPositiveDefinite {
        what: &'static str,
        pivot: usize,
        value: f64,
        diagnostic: String,
    },

    #[error("precision adjustment inapplicable: lambda = {0} must exceed 1")]
    PrecisionAdjustmentInapplicable(f64),

    #[error("periodic adjustment requires a complete rectangular grid")]
    PeriodicNeedsCompleteGrid,

    #[error("{what} = {size} exceeds the limit {limit}; {hint}")]
    SizeGuard {
        what: &'static str,
        size: usize,
        limit: usize,
        hint: &'static str,
    },

    #[error("partition index does not match the mask")]
    IndexMismatch,

    #[error("target ({row}, {col}) coincides with an observed cell")]
    TargetObserved { row: usize, col: usize },
}

impl Error {
    /// True for failures of a numerical routine (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDensity(..)
                | Error::SingularSpectrum(..)
                | Error::ImaginaryResidue { .. }
                | Error::NotPositiveDefinite { .. }
        )
    }

    pub fn is_size_guard(&self) -> bool {
        matches!(self, Error::SizeGuard { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
