use thiserror::Error;

use crate::types::Family;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid tolerance specification: {0}")]
    InvalidSpec(String),

    #[error("invalid measurement series: {0}")]
    InvalidSeries(String),

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("series is constant")]
    ConstantSeries,

    #[error("moving-range window {0} outside 2..=10")]
    WindowOutOfRange(usize),

    #[error("control chart constant requested for sample size {0}, table covers 2..=10")]
    OutOfTable(usize),

    #[error("moving-range estimators require individual observations (subgroup size 1), got {0}")]
    SubgroupNotOne(usize),

    #[error("subgroup estimators require subgroup size >= 2, got {0}")]
    SubgroupTooSmall(usize),

    #[error("subgroup size {0} exceeds the constants table (max 10)")]
    SubgroupOutOfTable(usize),

    #[error("group {index} has {size} observation(s); pooling needs at least 2")]
    GroupTooSmall { index: usize, size: usize },

    #[error("{family:?} requires strictly positive data (found {value})")]
    SupportViolation { family: Family, value: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("{family:?} fit did not converge within {iterations} iterations")]
    NonConvergence { family: Family, iterations: usize },

    #[error("no candidate distribution could be fitted")]
    NoFamilyFits,

    #[error("empty input")]
    EmptyInput,

    #[error("missing tolerance row `{0}`")]
    MissingToleranceRow(&'static str),

    #[error("non-numeric cell at row {row}, column {col}: {text:?}")]
    NonNumericCell { row: usize, col: usize, text: String },

    #[error("duplicate dimension id `{0}`")]
    DuplicateDimensionId(String),

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("degenerate plotting range: all values equal")]
    DegenerateRange,

    #[error("invalid bin edges: {0}")]
    InvalidBinEdges(String),

    #[error("value {0} falls outside the bin edges")]
    ValueOutOfBins(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("estimator {0} is not applicable: {1}")]
    NotApplicable(&'static str, String),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Csv(err.to_string())
    }
}
