use std::path::{Path, PathBuf};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const RUNTIME: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid config {path}: {message}")]
    Config { path: String, message: String },

    #[error("{}: already exists (pass --force to overwrite)", .0.display())]
    Exists(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] seat_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use seat_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config { .. } | CliError::Exists(_) => exit::VALIDATION,
            CliError::Io { .. } | CliError::Format { .. } => exit::RUNTIME,
            CliError::Core(e) => match e {
                E::Capacity { .. }
                | E::TypeCoverage(_)
                | E::Config { .. }
                | E::SequenceTooLong { .. }
                | E::Range { .. }
                | E::Empty(_)
                | E::MissingDataset(_) => exit::VALIDATION,
                E::Structure(_) => exit::RUNTIME,
                E::NonFinite(_) | E::NonConvergence(_) => exit::NUMERIC,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
