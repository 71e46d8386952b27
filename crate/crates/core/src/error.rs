use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("row {row}, column `{column}`: value `{value}` outside declared domain")]
    DomainViolation {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("invalid literal on `{feature}`: {message}")]
    InvalidLiteral { feature: String, message: String },

    #[error("causal graph contains a cycle: {}", .cycle.join(" -> "))]
    CyclicCausalGraph { cycle: Vec<String> },

    #[error("state is not causally consistent")]
    CausallyInconsistentInput,

    #[error("weight for `{feature}` is negative ({weight})")]
    NegativeWeight { feature: String, weight: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("black box failed at row {row}: {source}")]
    BlackBoxFailure {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed reply from model process: {0}")]
    Protocol(String),

    #[error("no prediction recorded for state {0}")]
    MissingPrediction(String),

    #[error("model did not answer within {0:?}")]
    Timeout(std::time::Duration),

    #[error("candidate grid has {size} states, above the cap of {cap}")]
    GridTooLarge { size: u128, cap: u128 },

    #[error("instance already receives the favorable outcome")]
    NotAdverse,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
