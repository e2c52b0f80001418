use std::path::{Path, PathBuf};

use iwz_core::Error as CoreError;
use thiserror::Error;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_BUDGET: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("writing output: {0}")]
    Output(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e {
                CoreError::AllZeroRow { .. }
                | CoreError::NumericalCollapse(_)
                | CoreError::NotPsd { .. } => EXIT_NUMERICAL,
                CoreError::BudgetExceeded { .. } => EXIT_BUDGET,
                _ => EXIT_VALIDATION,
            },
            CliError::Output(_) => 1,
            _ => EXIT_VALIDATION,
        }
    }
}
