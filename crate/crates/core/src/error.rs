use alloc::string::String;
use alloc::vec::Vec;

use crate::labels::{AlphabetId, Conflict};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("attribute selection is empty")]
    EmptySelection,
    #[error("invalid `{field}`: {message}")]
    InvalidConfig {
        field: &'static str,
        message: String,
    },
    #[error("number of neighbors {k} must be at least 1 and below the point count {rows}")]
    NeighborsOutOfRange { k: usize, rows: usize },
    #[error("numeric attribute `{0}` requires bins")]
    MissingBins(String),
    #[error("value {value} of `{attribute}` lies outside the bin edges")]
    OutsideBins { attribute: String, value: f64 },
    #[error("invalid filter on `{attribute}`: {message}")]
    InvalidFilter { attribute: String, message: String },
    #[error("unknown particle `{0}`")]
    UnknownParticle(String),
    #[error("unknown alphabet {0}")]
    UnknownAlphabet(AlphabetId),
    #[error("unknown alphabet `{0}`")]
    UnknownAlphabetName(String),
    #[error("unknown label {label} in alphabet {alphabet}")]
    UnknownLabel { alphabet: AlphabetId, label: String },
    #[error("alphabet `{0}` already exists")]
    DuplicateAlphabet(String),
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("label `{label}` still has {count} assignments; pass force to remove it")]
    LabelInUse { label: String, count: usize },
    #[error("snapshot violation at {pointer}: {message}")]
    Snapshot { pointer: String, message: String },
    #[error("{} conflicting assignments", .0.len())]
    MergeConflicts(Vec<Conflict>),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("computation cancelled")]
    Cancelled,
}
