//! Command-line front end for the delay ERG: scenario files, the flow-control
//! presets, LMI gain sweeps, parameter sweeps and certificate synthesis.

pub mod commands;
pub mod presets;
pub mod scenario;
pub mod table;

use erg_core::ErgError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{origin}: {field}: {message}")]
    Invalid {
        origin: String,
        field: String,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] ErgError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Usage(String),
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const VIOLATION: i32 = 2;
}

/// Residuals below this count as a constraint violation.
pub const VIOLATION_TOLERANCE: f64 = -1e-6;
