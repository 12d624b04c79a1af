use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] simplicity_core::Error),

    #[error("{0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 for analysis failures, 2 for usage and input/output problems.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Core(e) if !e.is_input_error() => ExitCode::from(1),
            _ => ExitCode::from(2),
        }
    }
}
