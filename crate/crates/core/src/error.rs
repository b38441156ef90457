use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A requested prefix length is zero or exceeds the vector dimension.
    #[error("dimension {requested} out of range 1..={available}")]
    DimensionOutOfRange { requested: usize, available: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vector norm below 1e-12{}", fmt_context(.context))]
    ZeroVector { context: Option<String> },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training diverged: non-finite loss at batch {batch}")]
    Divergence { batch: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// Correlation of a constant (or too short) series.
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("value {value} outside range [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("result has {available} entries, need at least {required}")]
    Size { required: usize, available: usize },

    #[error("invalid UTF-8 at byte offset {offset}")]
    Decode { offset: usize },
}

fn fmt_context(context: &Option<String>) -> String {
    match context {
        Some(c) => alloc::format!(" ({c})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn zero_vector() -> Self {
        Error::ZeroVector { context: None }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Attaches a location (pair index, sentence index, ...) to a zero-vector error.
    pub fn with_context(self, context: impl Into<String>) -> Self {
        match self {
            Error::ZeroVector { .. } => Error::ZeroVector {
                context: Some(context.into()),
            },
            other => other,
        }
    }
}
