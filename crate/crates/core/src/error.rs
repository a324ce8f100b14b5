use thiserror::Error;

/// Errors raised while ingesting or validating input data.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: {message}")]
    BadCell {
        row: usize,
        column: String,
        message: String,
    },
    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },
    #[error("no usable rows ({dropped} rows dropped for missing values)")]
    NoRows { dropped: usize },
    #[error("empty input: no header row")]
    EmptyInput,
    #[error("duplicate column `{0}` in header")]
    DuplicateColumn(String),
    #[error("dataset invariant violated: {0}")]
    Invariant(String),
}

/// Numerical failures inside the fitting machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("invalid argument: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("design matrix is rank deficient (column {0})")]
    RankDeficient(usize),
    #[error("model fit did not converge: {0}")]
    NonConvergence(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

/// Configuration parsing and validation errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Top-level error for the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("numerical failure in {module}: {source}")]
    Numerical {
        module: &'static str,
        #[source]
        source: NumError,
    },
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("result file error: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn numerical(module: &'static str, source: NumError) -> Self {
        Error::Numerical { module, source }
    }

    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Schema(_) | Error::Io(_) => 3,
            Error::Numerical { .. } => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
