use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<odefit_core::Error> for CliError {
    fn from(e: odefit_core::Error) -> Self {
        use odefit_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) | E::UnknownModel { .. } => CliError::Config(msg),
            E::Parse { .. }
            | E::NonIncreasingTime { .. }
            | E::NonFinite { .. }
            | E::TooFewRows { .. }
            | E::Shape(_)
            | E::DegenerateStencil { .. }
            | E::Csv(_)
            | E::Json(_) => CliError::Data(msg),
            E::Domain { .. } | E::NonFiniteProbe(_) | E::BlowUp { .. } | E::InsufficientIterates(_) => {
                CliError::Solver(msg)
            }
            E::Io(source) => CliError::Io {
                path: PathBuf::new(),
                source,
            },
        }
    }
}
