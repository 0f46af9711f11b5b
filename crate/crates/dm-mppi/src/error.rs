use std::fmt;

/// Error type shared by the whole crate.
#[derive(Debug)]
pub enum Error {
    /// A precondition on numeric input was violated (non-finite state,
    /// mismatched lengths, empty input where data is required, ...).
    Domain(String),
    /// Configuration values that cannot be used (bad bounds, zero dt, ...).
    Config(String),
    /// Training aborted because the loss became non-finite.
    TrainingDiverged { epoch: usize, batch: usize },
    /// A model or dataset file could not be parsed; offset is the byte
    /// position at which reading failed.
    Parse { offset: usize, message: String },
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::TrainingDiverged { epoch, batch } => {
                write!(f, "training diverged: non-finite loss at epoch {epoch}, batch {batch}")
            }
            Error::Parse { offset, message } => {
                write!(f, "parse error at byte {offset}: {message}")
            }
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
