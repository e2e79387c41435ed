use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("unknown record kind {0}")]
    UnknownKind(u8),

    #[error("expected record kind {expected}, found {found}")]
    KindMismatch { expected: u8, found: u8 },

    #[error(
        "truncated file: needed {needed} bytes at offset {offset}, only {available} available"
    )]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("{0} unexpected trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row} has a non-finite entry")]
    NonFinite { row: usize },

    #[error("row {row} has zero norm")]
    ZeroNorm { row: usize },

    #[error("label {label} at position {index} is out of range for {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: u32,
        classes: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("class lists differ: {0}")]
    ClassMismatch(String),

    #[error("invalid domain bank: {0}")]
    Bank(String),

    #[error("unknown preset {0:?}")]
    UnknownPreset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("class {class} has a zero-norm mean across domains")]
    DegenerateClass { class: usize },

    #[error("numeric abort at epoch {epoch}: {what}")]
    NumericAbort { epoch: usize, what: String },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad input values rather than I/O or numerics.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::NumericAbort { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
