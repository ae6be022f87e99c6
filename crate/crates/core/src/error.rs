use thiserror::Error;

/// Errors raised anywhere in the clustering pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error: {0}")]
    Csv(String),

    #[error("ragged row at line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-numeric or non-finite cell {value:?} at line {line}, column {column}")]
    BadCell {
        line: usize,
        column: usize,
        value: String,
    },

    #[error("panel too small: need at least 2 series and 2 time points, got p={p}, n={n}")]
    PanelTooSmall { p: usize, n: usize },

    #[error("duplicate series id {0:?}")]
    DuplicateSeriesId(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("lag {lag} out of range for n={n}")]
    LagOutOfRange { lag: usize, n: usize },

    #[error("loading columns are not orthonormal (max Gram deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fewer than two local maxima in the ratio sequence (found {found}); raise J0 or supply factor counts manually")]
    TooFewLocalMaxima { found: usize },

    #[error("rank-deficient matrix (condition number {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("eigen-solver failure: {0}")]
    EigenFailure(String),

    #[error("zero-norm row {row} in similarity input; run no-cluster detection first")]
    ZeroNormRow { row: usize },

    #[error("index {index} out of range for p={p}")]
    IndexOutOfRange { index: usize, p: usize },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable code, used by the CLI and the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "E_IO",
            Error::Csv(_) | Error::RaggedRow { .. } | Error::BadCell { .. } => "E_PARSE",
            Error::PanelTooSmall { .. } => "E_PANEL_SIZE",
            Error::DuplicateSeriesId(_) => "E_DUPLICATE_ID",
            Error::DimensionMismatch { .. } => "E_DIMENSION",
            Error::LagOutOfRange { .. } => "E_LAG",
            Error::NotOrthonormal { .. } => "E_ORTHONORMAL",
            Error::InvalidParameter(_) => "E_PARAM",
            Error::TooFewLocalMaxima { .. } => "E_LOCAL_MAXIMA",
            Error::RankDeficient { .. } => "E_RANK",
            Error::EigenFailure(_) => "E_EIGEN",
            Error::ZeroNormRow { .. } => "E_ZERO_ROW",
            Error::IndexOutOfRange { .. } => "E_INDEX",
            Error::Config { .. } => "E_CONFIG",
        }
    }
}
