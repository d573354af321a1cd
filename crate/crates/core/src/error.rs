use thiserror::Error;

/// Errors raised by the library.
///
/// Validation problems (bad parameters, violated hypotheses) are kept apart
/// from numerical failures so callers can map them to different exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("hypothesis (H) fails: {0}")]
    HypothesisFails(String),

    #[error("smoothed scheme not applicable for k = {k} (requires k >= 4)")]
    SmoothingNotApplicable { k: usize },

    #[error("continuum kernel not square-integrable for k = {k}; use smoothed kernel")]
    KernelNotSquareIntegrable { k: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("resolution {fine} is not a multiple of {coarse}")]
    NonDivisibleResolution { fine: usize, coarse: usize },

    #[error("axis {axis} covariance is not positive definite (pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { axis: usize, pivot: usize, value: f64 },

    #[error("mollifier zero crossing at multiplier {value:e}; reduce epsilon")]
    MollifierZeroCrossing { value: f64 },

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("tail bound {tail:e} exceeds 10% of computed sum {sum:e}; increase B_max")]
    TailTooLarge { tail: f64, sum: f64 },

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("replicate {replicate}: {message}")]
    Replicate { replicate: usize, message: String },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::MollifierZeroCrossing { .. }
                | Error::Quadrature(_)
                | Error::TailTooLarge { .. }
                | Error::Divergence(_)
                | Error::Replicate { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
