use clickstat::ClickError;

/// Failure of one command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<ClickError> for CliError {
    fn from(err: ClickError) -> Self {
        let msg = err.to_string();
        match err {
            ClickError::InvalidParameter(_) | ClickError::Domain(_) => CliError::Validation(msg),
            ClickError::InitializationFailed(_) => CliError::Numerical(format!(
                "{msg} (pass --delta-x with the single-click area to skip the search)"
            )),
            _ => CliError::Numerical(msg),
        }
    }
}
