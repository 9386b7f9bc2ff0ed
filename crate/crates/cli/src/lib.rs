//! Command-line front end for `promptpainter`: config resolution, the run
//! and bench commands, and the on-disk run manifest.

use std::path::PathBuf;

use promptpainter::Error;

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{bench_command, run_command, Registry, RunSummary};
pub use config::{ConfigFile, Overrides, Settings};
pub use manifest::{BenchReport, RunManifest};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 2;
    pub const BACKEND: u8 = 3;
    pub const NUMERICAL: u8 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The config file is not valid JSON for the schema.
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Core(#[from] Error),

    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse { .. } => exit::CONFIG,
            CliError::Core(e) => exit_code_for(e),
            CliError::Write { .. } => exit::BACKEND,
        }
    }
}

/// Config and precondition errors exit 2, backend and I/O failures 3,
/// numerical aborts 4. A failed style reports its underlying cause.
pub fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Domain(_) => exit::CONFIG,
        Error::Backend(_) | Error::Io { .. } | Error::Image(_) => exit::BACKEND,
        Error::Numerical { .. } => exit::NUMERICAL,
        Error::Style { source, .. } => exit_code_for(source),
    }
}
