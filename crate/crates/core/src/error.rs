use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Roots on or outside the unit circle, or parameters outside their domain.
    #[error("inadmissible model: {0}")]
    Inadmissible(String),

    /// Repeated roots or pole-zero cancellation.
    #[error("degenerate parametrization: {0}")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular design: regressor rows are linearly dependent")]
    SingularDesign,

    #[error("degenerate input series: {0}")]
    DegenerateInput(String),

    #[error("missing integral for structure n={n}, m={m}, n1={n1}, m1={m1}")]
    MissingIntegral { n: usize, m: usize, n1: usize, m1: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
