use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("no supervised tokens: the loss mask is all false")]
    NoSupervisedTokens,

    #[error("backward called on a value that does not depend on any parameter")]
    NotDifferentiable,

    #[error("non-finite value produced by `{op}` (node {node})")]
    NonFinite { op: &'static str, node: usize },

    #[error("forward pass is not deterministic: two evaluations gave {first} and {second}")]
    Nondeterministic { first: f64, second: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("encoding error: non-ASCII byte {byte:#04x} at offset {offset}")]
    Encoding { offset: usize, byte: u8 },

    #[error(
        "sequence too long: {video} video + {query} query + {answer} answer + {specials} special tokens > max {max}"
    )]
    Length {
        video: usize,
        query: usize,
        answer: usize,
        specials: usize,
        max: usize,
    },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("schema version mismatch: expected {expected}, found {found}")]
    Schema { expected: u32, found: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
