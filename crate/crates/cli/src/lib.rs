//! Drivers behind the `focus` command: trace generation, single runs and sweeps.

mod run;
mod sweep;

use std::path::{Path, PathBuf};

use focus_core::FocusError;
use thiserror::Error;

pub use run::{cmd_gen, cmd_run, execute, sparsity_from_stats, GenSpec, Mode, RunOutcome, RunSpec, TraceSource};
pub use sweep::{apply_sweep_value, cmd_sweep, SweepParam, SweepSpec, SWEEP_HEADER};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    /// Attaches a file path to a core error.
    pub(crate) fn at(path: &Path, err: FocusError) -> Self {
        match err {
            FocusError::Io(source) => CliError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => {
                let mapped = CliError::from(other);
                match mapped {
                    CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
                    e => e,
                }
            }
        }
    }
}

impl From<FocusError> for CliError {
    fn from(err: FocusError) -> Self {
        match err {
            FocusError::Internal(m) => CliError::Internal(m),
            FocusError::Io(source) => CliError::Io {
                path: PathBuf::new(),
                source,
            },
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
