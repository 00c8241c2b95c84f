//! Run configuration, diagnostics CSV files and binary checkpoints.

mod checkpoint;
mod config;
mod table;

use std::path::PathBuf;

pub use checkpoint::{
    read_checkpoint, read_checkpoint_header, read_observations, read_state_matching,
    write_checkpoint, write_observations, CheckpointHeader, CheckpointKind, CHECKPOINT_VERSION,
    HEADER_LEN, MAGIC,
};
pub use config::{
    parse_config, AssimilationSection, ConfigError, GridSection, InitKind, OutputSection,
    PhysicsSection, RunConfig, Violation,
};
pub use table::{read_diagnostics, write_diagnostics, DiagnosticsWriter, CSV_HEADER};

use crate::model::ModelError;
use crate::spectral::SpectralError;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: record {record}: {message}", path.display())]
    Table {
        path: PathBuf,
        record: usize,
        message: String,
    },
    #[error("{}: not a checkpoint (bad magic bytes)", path.display())]
    BadMagic { path: PathBuf },
    #[error("{}: unsupported checkpoint version {version}", path.display())]
    UnsupportedVersion { path: PathBuf, version: u32 },
    #[error("{}: header {field} is {found}, expected {expected}", path.display())]
    HeaderMismatch {
        path: PathBuf,
        field: &'static str,
        expected: String,
        found: String,
    },
    #[error("{}: payload has {found} bytes, expected {expected}", path.display())]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn file_error(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}
