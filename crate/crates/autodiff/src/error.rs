use thiserror::Error;

pub type Result<T> = std::result::Result<T, AutodiffError>;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape {shape:?} holds {expected} elements but {len} values were given")]
    ElementCount {
        shape: Vec<usize>,
        expected: usize,
        len: usize,
    },

    #[error("{op}: {dim} mismatch (expected {expected}, got {got})")]
    ShapeMismatch {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: unsupported shape {shape:?} ({reason})")]
    BadShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: &'static str,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("gradient requested for a non-scalar output of shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("node {0} does not reach the differentiated output")]
    Unreachable(usize),

    #[error("second-order differentiation is not implemented for `{0}`")]
    NoSecondOrder(&'static str),

    #[error("variables from different graphs were combined")]
    ForeignVar,

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("parameter `{0}` not found")]
    MissingParam(String),

    #[error("malformed tensor file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AutodiffError {
    pub(crate) fn mismatch(op: &'static str, dim: &'static str, expected: usize, got: usize) -> Self {
        AutodiffError::ShapeMismatch { op, dim, expected, got }
    }

    pub(crate) fn bad_shape(op: &'static str, shape: &[usize], reason: &'static str) -> Self {
        AutodiffError::BadShape {
            op,
            shape: shape.to_vec(),
            reason,
        }
    }
}
