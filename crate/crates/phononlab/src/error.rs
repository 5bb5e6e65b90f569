use std::path::PathBuf;

/// Everything the CLI can fail with, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Schema(String),
    #[error("engine error: {0}")]
    Engine(#[from] phononlab_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Filesystem(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Engine(_) => 3,
            CliError::Io { .. } | CliError::Filesystem(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
