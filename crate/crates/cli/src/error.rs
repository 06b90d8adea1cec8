use qa_core::QaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    /// The model itself is invalid or unstable.
    #[error("{0}")]
    Model(QaError),
    #[error("{0}")]
    Numeric(QaError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl From<QaError> for CliError {
    fn from(e: QaError) -> Self {
        match e {
            QaError::Unstable { .. } | QaError::InvalidModel(_) | QaError::InvalidDistribution(_) => CliError::Model(e),
            other => CliError::Numeric(other),
        }
    }
}

impl CliError {
    /// 0 success, 1 internal/numeric error, 2 invalid or unstable model,
    /// 3 config error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Model(_) => 2,
            _ => 1,
        }
    }
}
