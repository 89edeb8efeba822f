use thiserror::Error;

/// Errors produced by the numerics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cutoff too large: about {predicted} modes predicted, budget is {budget}")]
    CutoffTooLarge { predicted: f64, budget: usize },

    #[error("cutoff insufficient: tail bound {tail:e} exceeds tolerance {tol:e}")]
    CutoffInsufficient { tail: f64, tol: f64 },

    #[error("no convergence after {iterations} iterations, bracket [{lo:e}, {hi:e}]")]
    NoConvergence { lo: f64, hi: f64, iterations: usize },

    #[error("lambda = {lambda} lies within 1e-9 of the pole {pole}")]
    PoleProximity { lambda: f64, pole: f64 },

    #[error("mode {0} shares its energy with another mode; p_k is undefined")]
    DegenerateMode(usize),

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerics themselves (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CutoffInsufficient { .. }
                | Error::NoConvergence { .. }
                | Error::PoleProximity { .. }
                | Error::CutoffTooLarge { .. }
        )
    }
}
