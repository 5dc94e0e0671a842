use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Io(String),

    #[error(transparent)]
    Core(#[from] fbs_unroll::Error),
}

impl CliError {
    /// Short category for the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Core(e) if e.is_numeric() => "numeric",
            CliError::Core(fbs_unroll::Error::Io { .. }) => "io",
            CliError::Core(fbs_unroll::Error::Format { .. }) => "format",
            CliError::Core(_) => "domain",
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.kind() == "numeric" {
            2
        } else {
            1
        }
    }
}

pub fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
