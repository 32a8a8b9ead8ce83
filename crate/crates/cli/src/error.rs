use drawdown_mc::McError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, grids or parameters; reported before anything runs.
    #[error("{0}")]
    Invalid(String),

    #[error("config file {path}: {reason}")]
    Config { path: String, reason: String },

    #[error("{0} is not finite")]
    NonFinite(String),

    #[error(transparent)]
    Core(#[from] drawdown_core::Error),

    #[error(transparent)]
    Mc(#[from] McError),

    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn is_validation(&self) -> bool {
        match self {
            CliError::Invalid(_) | CliError::Config { .. } => true,
            CliError::Core(e) => e.is_validation(),
            CliError::Mc(e) => e.is_validation(),
            _ => false,
        }
    }

    /// Variant name written into the `status` field of a failed row.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Invalid(_) => "InvalidParameter",
            CliError::Config { .. } => "Config",
            CliError::NonFinite(_) => "NonFinite",
            CliError::Core(e) => e.kind(),
            CliError::Mc(e) => e.kind(),
            CliError::Io { .. } => "Io",
            CliError::Csv(_) => "Csv",
            CliError::Json(_) => "Json",
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            crate::EXIT_INVALID
        } else {
            crate::EXIT_NUMERICAL
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}
