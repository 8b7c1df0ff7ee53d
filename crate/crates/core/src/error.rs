use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("duplicate identifier {0:?}")]
    DuplicateId(String),

    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("duplicate judgment for query {query:?}, document {doc:?}")]
    DuplicateJudgment { query: String, doc: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("value {value} at row {row}, column {col} overflows half precision")]
    OverflowToInfinity { row: usize, col: usize, value: f64 },

    #[error("projection of row {row} is the zero vector and cannot be normalized")]
    NormalizationOfZero { row: usize },

    #[error("dimension {dim} is not divisible into {parts} subspaces")]
    NotDivisible { dim: usize, parts: usize },

    #[error("need at least {needed} training points, got {got}")]
    TooFewTrainingPoints { needed: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index is empty")]
    EmptyIndex,

    #[error("dimension {0} is not a multiple of 8")]
    DimensionNotByteAligned(usize),

    #[error("candidate {0} is not in the corpus")]
    UnknownCandidate(usize),

    #[error("triplet {0} has no margin label")]
    MissingMarginLabel(usize),

    #[error("loss diverged at step {step}: {value}")]
    DivergedLoss { step: usize, value: f64 },

    #[error("unknown passage id {0:?}")]
    UnknownPassageId(String),

    #[error("query {query:?}: need {needed} negatives, only {available} candidates")]
    NotEnoughCandidates { query: String, needed: usize, available: usize },

    #[error("{count} pair(s) lack cross-encoder scores, first: ({query:?}, {doc:?})")]
    MissingScore { count: usize, query: String, doc: String },

    #[error("triplet for query {query:?} uses {doc:?} as both positive and negative")]
    SelfNegative { query: String, doc: String },

    #[error("passage {0:?} has no terms")]
    EmptyPassage(String),

    #[error("qrels are empty")]
    EmptyQrels,

    #[error("query set is empty")]
    EmptyQuerySet,
}
