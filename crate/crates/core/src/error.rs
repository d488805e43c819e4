use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution was requested over an empty population.
    #[error("empty distribution: {0}")]
    EmptyDistribution(String),

    /// Mismatched lengths, labels, grids or similar shape errors.
    #[error("structural error: {0}")]
    Structural(String),

    /// An argument outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid probability mass function: {0}")]
    InvalidPmf(String),

    #[error("fleet is empty")]
    EmptyFleet,

    #[error("cosine similarity is undefined for a zero vector")]
    UndefinedSimilarity,

    #[error("cannot normalize an all-zero profile")]
    ZeroProfile,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported model schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("model validation failed: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
