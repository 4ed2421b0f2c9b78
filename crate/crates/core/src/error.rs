use thiserror::Error;

use crate::sketch::{ConstraintKind, PrimitiveKind};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{kind:?} expects {expected} reference(s), got {got}")]
    BadArity {
        kind: ConstraintKind,
        expected: usize,
        got: usize,
    },
    #[error("reference {reference} out of range for {count} primitive(s)")]
    RefOutOfRange { reference: usize, count: usize },
    #[error("{kind:?} cannot be applied to {operands:?}")]
    IllegalOperandKinds {
        kind: ConstraintKind,
        operands: Vec<PrimitiveKind>,
    },
    #[error("{kind:?} requires a value iff it is a dimension")]
    MissingValue { kind: ConstraintKind },
    #[error("primitive {id} is degenerate: {reason}")]
    DegeneratePrimitive { id: usize, reason: &'static str },
    #[error("invalid sketch: {0}")]
    InvalidSketch(String),
    #[error("sketch has {count} primitives, limit is {limit}")]
    TooManyPrimitives { count: usize, limit: usize },
    #[error("constraint sequence has {count} items, limit is {limit}")]
    TooManyConstraints { count: usize, limit: usize },
    #[error("token stream ended before EOS")]
    Truncated,
    #[error("unexpected token {token} at position {position}")]
    UnexpectedToken { token: u32, position: usize },
    #[error("token sequence is not structurally valid: {0}")]
    StructurallyInvalid(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("group of size {0} is too small")]
    DegenerateGroup(usize),
    #[error("no preference pairs could be formed")]
    NoPairs,
    #[error("at least two generations are required, got {0}")]
    DegenerateK(usize),
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error("json: {0}")]
    Json(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
