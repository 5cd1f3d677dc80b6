use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{file}:{line}: malformed row: {message}")]
    MalformedRow { file: String, line: u64, message: String },

    #[error("edges line {line}: unknown paper id {id}")]
    UnknownId { line: u64, id: u64 },

    #[error("edges line {line}: paper {citing} cites {cited} which is not strictly earlier")]
    YearOrderViolation { line: u64, citing: u64, cited: u64 },

    #[error("edges line {line}: duplicate edge {citing} -> {cited}")]
    DuplicateEdge { line: u64, citing: u64, cited: u64 },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("paper {id}: missing {field}")]
    MissingMetadata { id: u32, field: &'static str },

    #[error("paper {id}: journal id required for journal-year normalization")]
    MissingJournal { id: u32 },

    #[error("row {row}: non-positive value {value} for log({variable})")]
    NonPositiveLog { variable: String, row: usize, value: f64 },

    #[error("factor {factor}: level {level} has no observations")]
    EmptyFactorLevel { factor: String, level: i64 },

    #[error("design matrix is rank deficient; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("unknown factor {0}")]
    UnknownFactor(String),

    #[error("invalid regression spec: {0}")]
    InvalidSpec(String),

    #[error("group-gap decomposition needs two non-empty groups")]
    SingleGroup,
}
