use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("unknown category {value:?} in column {col}")]
    UnknownCategory { col: usize, value: String },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("instance does not conform to schema: {0}")]
    Conformance(String),
    #[error("contradictory constraints on attribute {attr}")]
    Contradiction { attr: usize },
    #[error("empty maximal-compatible rule on attribute {attr}")]
    EmptyMcr { attr: usize },
    #[error("leaf ordinal {ordinal} out of range for tree {tree} with {leaf_count} leaves")]
    LeafIndex { tree: usize, ordinal: u32, leaf_count: u32 },
    #[error("supervised training requires labels")]
    MissingLabels,
    #[error("cannot train on an empty dataset")]
    EmptyData,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("model mismatch: encoding forest {found:016x}, model {expected:016x}")]
    ModelMismatch { expected: u64, found: u64 },
    #[error("metric {metric} undefined: {msg}")]
    MetricDomain { metric: &'static str, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corrupt model: stored hash {stored}, computed {computed:016x}")]
    CorruptModel { stored: String, computed: u64 },
    #[error("unsupported model version {0}")]
    Version(u64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
