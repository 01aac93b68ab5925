use thiserror::Error;

/// Errors raised by model construction, scoring and the CLI pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("covariate `{name}` is degenerate: {reason}")]
    DegenerateCovariate { name: String, reason: String },

    #[error("quantile knots of covariate `{name}` coincide; the covariate is too heavily tied")]
    KnotCollision { name: String },

    #[error("grid basis does not match the training basis (knots or degree differ)")]
    BasisMismatch,

    #[error("basis of covariate `{name}` is rank deficient (smallest eigenvalue {min_eigenvalue:e})")]
    RankDeficientBasis { name: String, min_eigenvalue: f64 },

    #[error("degrees of freedom {dof} outside the open interval (1, {upper})")]
    OutOfRangeDof { dof: f64, upper: f64 },

    #[error("invalid degrees-of-freedom grid: {0}")]
    InvalidGrid(String),

    #[error("model space has {size} models, above the enumeration cap {cap}")]
    SpaceTooLarge { size: f64, cap: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("linear design is collinear (Cholesky of the GLS cross-product failed)")]
    CollinearDesign,

    #[error("response is degenerate for the family: {0}")]
    SeparationOrDegenerate(String),

    #[error("Bayesian IWLS did not converge within {iterations} iterations")]
    IwlsDiverged { iterations: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidGrid(_) | Error::SpaceTooLarge { .. } => 2,
            Error::Data(_)
            | Error::DegenerateCovariate { .. }
            | Error::KnotCollision { .. }
            | Error::SeparationOrDegenerate(_)
            | Error::InvalidInput(_) => 3,
            _ => 4,
        }
    }
}
