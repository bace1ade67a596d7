//! Errors of the driver and their exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// An error raised by a numerical module, with its code.
    #[error("error[{code}]: {0}", code = .0.code())]
    Module(#[from] ahres::Error),
    #[error("error[E_IO]: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Module(_) | CliError::Io(_) => 3,
        }
    }
}
