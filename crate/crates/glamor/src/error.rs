use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Library-level error type. The CLI maps `Config`, `Data` and `Io` variants
/// to exit code 2 (bad input) and everything else to exit code 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Lambda vector that does not define a valid distribution.
    #[error("invalid GLD parameters: {0}")]
    InvalidParams(String),

    /// Requested moment does not exist for these shape parameters.
    #[error("moment undefined: {0}")]
    MomentUndefined(String),

    /// Regression design matrix is rank-deficient beyond repair.
    #[error("singular design matrix: {0}")]
    SingularDesign(String),

    /// Sensitivity index requested for a model with zero output variance.
    #[error("sensitivity index undefined: {0}")]
    UndefinedIndex(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Data(_) | Error::Io { .. } | Error::Csv(_) => 2,
            _ => 1,
        }
    }

    /// Stable machine-readable tag for error JSON output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidParams(_) => "invalid_params",
            Error::MomentUndefined(_) => "moment_undefined",
            Error::SingularDesign(_) => "singular_design",
            Error::UndefinedIndex(_) => "undefined_index",
            Error::Fit(_) => "fit",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
