use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate geometry: {what} coincide")]
    DegenerateGeometry { what: String },

    #[error("infeasible resource allocation: {0}")]
    Allocation(String),

    #[error("empty resource allocation")]
    EmptyAllocation,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "quadrature did not converge: estimated error {error_estimate:e} after {intervals} intervals on [{lower}, {upper}]"
    )]
    Quadrature {
        error_estimate: f64,
        intervals: usize,
        lower: f64,
        upper: f64,
    },

    #[error("estimation failure: {0}")]
    Estimation(String),

    #[error("Fisher information matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularFim { condition: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
