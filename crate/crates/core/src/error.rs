use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),

    #[error("no numeric feature columns remain after dropping non-numeric columns")]
    NoNumericColumns,

    #[error("dataset has no rows")]
    NoRows,

    #[error("invalid sidecar: {0}")]
    Sidecar(String),

    #[error("unsupported dtype `{0}` (expected float32 little-endian)")]
    UnsupportedDtype(String),

    #[error("shape mismatch: declared {declared} bytes, found {actual}")]
    ShapeMismatch { declared: usize, actual: usize },

    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} samples, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },

    #[error("series is constant; autocorrelation is undefined")]
    ConstantSeries,

    #[error("matrix is all zeros; PCA is undefined")]
    ZeroMatrix,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

/// Wraps an error with the name of the pipeline stage that produced it.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}
