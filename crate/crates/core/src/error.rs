use thiserror::Error;

/// Errors surfaced by the numerical and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("gamma must exceed 2 (finite-variance regime), got {0}")]
    GammaOutOfRange(f64),

    #[error("quadrature failed to reach tolerance: {0}")]
    Quadrature(String),

    #[error("integral diverges: {0}")]
    DivergentIntegral(String),

    #[error("root finder could not bracket: {0}")]
    RootBracket(String),

    #[error("eigensolver did not converge for index {0}")]
    EigenNoConverge(usize),

    #[error("test function has no extension rule but must be evaluated outside [0,1]")]
    MissingExtension,

    #[error("test function does not belong to the required space: {0}")]
    SpaceMismatch(String),

    #[error("derivative order {requested} unavailable (max declared order {max})")]
    DerivOrder { requested: usize, max: usize },

    #[error("total event rate {0} is not finite; lattice too large for this theta")]
    RateOverflow(f64),

    #[error("non-finite value encountered at t = {0}")]
    NonFinite(f64),

    #[error("insufficient resolution: {0}")]
    Resolution(String),
}

pub type Result<T> = std::result::Result<T, Error>;
