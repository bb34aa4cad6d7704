use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular matrix in {context} (condition number {condition:.3e})")]
    SingularMatrix { context: &'static str, condition: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("missing component value for {0}")]
    MissingComponent(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid channel specification: {0}")]
    InvalidSpec(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("quadrature did not converge: relative change {change:.3e} at order {order}")]
    QuadratureNotConverged { order: usize, change: f64 },

    #[error("degenerate channel: |u[{index}]| or its pivot is {value:.3e}")]
    DegenerateChannel { index: usize, value: f64 },

    #[error("rank deficient input: smallest singular value {0:.3e}")]
    RankDeficient(f64),

    #[error("pattern set is rank deficient: {0}")]
    RankDeficientPatterns(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("empty training set")]
    EmptyTraining,

    #[error("real part of the coupling matrix is singular")]
    SingularRealPart,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trial {index}: {source}")]
    Trial { index: usize, source: Box<Error> },

    #[error("{0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularMatrix { .. }
            | Error::QuadratureNotConverged { .. }
            | Error::DegenerateChannel { .. }
            | Error::RankDeficient(_)
            | Error::RankDeficientPatterns(_)
            | Error::SingularRealPart => true,
            Error::Trial { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
