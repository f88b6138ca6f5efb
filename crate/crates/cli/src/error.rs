use qnd_core::QndError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{0}")]
    Fit(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Csv(String),
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Csv(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Fit(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

impl From<QndError> for CliError {
    fn from(e: QndError) -> Self {
        match e {
            QndError::NumericalFailure(_) | QndError::DegenerateNullSpace { .. } => CliError::Numerical(e.to_string()),
            QndError::FitFailure { .. } => CliError::Fit(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
