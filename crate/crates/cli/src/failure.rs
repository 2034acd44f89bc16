use std::path::Path;
use std::process::ExitCode;

use thiserror::Error;

/// A failed command, carrying its documented exit code.
#[derive(Debug, Error)]
pub enum Failure {
    /// Invalid configuration, arguments or checkpoint: exit 2.
    #[error("{0}")]
    Config(String),
    /// Missing or malformed data files: exit 3.
    #[error("{0}")]
    Data(String),
    /// Training diverged: exit 4.
    #[error("{0}")]
    NonFinite(String),
    /// Gradient check tolerance exceeded: exit 1.
    #[error("{0}")]
    Check(String),
    /// Anything else, e.g. an unwritable output directory: exit 1.
    #[error("{0}")]
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Check(_) | Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::NonFinite(_) => 4,
        })
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Runtime(format!("{}: {e}", path.display()))
    }

    /// Classifies an error raised while reading input data.
    pub fn data(e: attnviz::Error) -> Self {
        match e {
            attnviz::Error::Io { .. }
            | attnviz::Error::Format { .. }
            | attnviz::Error::Input(_) => Failure::Data(e.to_string()),
            other => other.into(),
        }
    }
}

impl From<attnviz::Error> for Failure {
    fn from(e: attnviz::Error) -> Self {
        use attnviz::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) | E::Usage(_) | E::Checkpoint(_) => Failure::Config(msg),
            E::Format { .. } | E::Input(_) => Failure::Data(msg),
            E::NonFiniteLoss { .. } => Failure::NonFinite(msg),
            E::Shape { .. } | E::Io { .. } => Failure::Runtime(msg),
        }
    }
}
