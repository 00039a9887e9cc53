use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error(transparent)]
    Core(#[from] lpcluster::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl CliError {
    pub fn config(field: &'static str, reason: impl Into<String>) -> Self {
        CliError::Config {
            field,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for bad configuration, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        use lpcluster::Error as E;
        match self {
            CliError::Config { .. } => 2,
            CliError::Core(
                E::InvalidParameter { .. }
                | E::BlockLongerThanSample { .. }
                | E::TooManyExtremalBlocks { .. }
                | E::NonContracting { .. }
                | E::NotLinear(_),
            ) => 2,
            CliError::Core(_) | CliError::Io { .. } | CliError::Csv { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
