use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("forward cache does not match the network it is used with")]
    StaleCache,

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("training diverged at epoch {epoch}: {what}")]
    Diverged { epoch: usize, what: String },

    #[error("unstable run: pH clamp active on {clamped} of {steps} steps")]
    UnstableRun { clamped: usize, steps: usize },

    #[error("malformed checkpoint (line {line}): {message}")]
    Checkpoint { line: usize, message: String },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed csv at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-parsable class used by the command-line front end.
    pub fn class(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::StaleCache => "stale-cache",
            Error::EmptyBuffer => "empty-buffer",
            Error::Diverged { .. } => "diverged",
            Error::UnstableRun { .. } => "unstable-run",
            Error::Checkpoint { .. } => "checkpoint",
            Error::Config { .. } => "config",
            Error::Csv { .. } => "csv",
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => "not-found",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn ensure_finite(value: f64, what: &'static str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
