//! Dataset generation, training and evaluation from the command line.
//!
//! The binary is a thin wrapper over [`commands`]; everything here is also
//! usable as a library, which is how the integration tests drive it.

pub mod checkpoint;
pub mod commands;
pub mod dataset;
pub mod record;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use commands::{cmd_eval, cmd_generate, cmd_train, Cli, Command};
pub use dataset::{Dataset, Manifest};
pub use record::Record;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("generating {split} trajectory {index}: {source}")]
    Generation {
        split: &'static str,
        index: usize,
        #[source]
        source: dynsuite_core::Error,
    },

    #[error(transparent)]
    Core(#[from] dynsuite_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Worker count requested through `DYNSUITE_THREADS`, if any.
pub fn thread_limit() -> Result<Option<usize>, CliError> {
    match std::env::var("DYNSUITE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("DYNSUITE_THREADS must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}
