use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(&'static str),

    #[error("degenerate scale: median absolute deviation is zero")]
    DegenerateScale,

    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityDomain(f64),

    #[error("singular matrix")]
    Singular,

    #[error("rank-deficient sample: {rows} rows for {cols} columns")]
    RankDeficient { rows: usize, cols: usize },

    #[error("degenerate leverage at row {row}: h = {leverage}")]
    DegenerateLeverage { row: usize, leverage: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("initial design singular after {0} attempts")]
    SingularInitialDesign(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
