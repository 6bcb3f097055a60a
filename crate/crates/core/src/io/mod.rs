//! File formats and data synthesis: scenario CSVs, the synthetic day
//! generator, persisted reference libraries with staleness guards, and the
//! run configuration file.
//!
//! All numeric serialization uses 17-significant-digit scientific notation so
//! doubles survive a write/read cycle bit-for-bit, and parsing is
//! locale-independent.

mod config;
mod scenario;
mod sequences;

pub use config::{
    load_config, ConfigFile, DeviceSection, NetworkSection, NoiseSection, OcoSection,
    PricingSection, ReferenceSection,
};
pub use scenario::{generate_synthetic, load_library, save_library, SynthConfig};
pub use sequences::{load_sequences, persist_sequences, spec_fingerprint, LibraryManifest};

use crate::grid::GridError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    /// Malformed content at a known location; `column` is the 1-based field
    /// index when the problem is cell-level.
    #[error("{path}:{line}{}: {message}", column.map(|c| format!(":{c}")).unwrap_or_default())]
    Parse {
        path: String,
        line: usize,
        column: Option<usize>,
        message: String,
    },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(
        "stale reference library: built for case fingerprint {found}, active case is {expected}; \
         re-run the offline stage"
    )]
    StaleLibrary { expected: String, found: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{path}: {message}")]
    Config { path: String, message: String },
}

/// Formats a double with enough digits to reparse to the identical bits.
pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_string(path: &std::path::Path, contents: &str) -> Result<(), IoError> {
    std::fs::write(path, contents).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn parse_cell(
    raw: &str,
    path: &std::path::Path,
    line: usize,
    column: usize,
) -> Result<f64, IoError> {
    raw.trim().parse::<f64>().map_err(|_| IoError::Parse {
        path: path.display().to_string(),
        line,
        column: Some(column),
        message: format!("'{}' is not a number", raw.trim()),
    })
}
