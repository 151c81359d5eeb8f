use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied an argument that violates an operation's precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// Malformed parity-check (alist) text.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The decoder cannot provide what was asked of it (e.g. input gradients).
    #[error("capability error: {0}")]
    Capability(String),

    /// The operation refuses to run because it would be infeasible.
    #[error("refused: {0}")]
    Refused(String),

    /// Training diverged.
    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
