//! Binary grid files, directory layouts and JSON reports.

mod grid_file;
mod layout;
mod report;

pub use grid_file::{
    read_grid, read_grid_file, write_grid, write_grid_file, Dtype, GridCodec, GridData, GridFile,
    GridHeader, MAGIC, VERSION,
};
pub use layout::{
    frame_dir, read_bundle, read_json, read_labels, read_refined, write_bundle, write_json,
    write_labels, write_refined, LabelsManifest, SequenceManifest, BUNDLE_MANIFEST,
    LABELS_MANIFEST, REFINED_MANIFEST,
};
pub use report::{digest_tree, sha256_file, ReportFile, SelectedScores, WindowDef, TIMESTAMP_KEY};

use std::path::PathBuf;

use thiserror::Error;

/// Malformed or unsupported file contents.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {0:?}, expected \"SGRD\"")]
    BadMagic([u8; 4]),

    #[error("unsupported grid file version {0}")]
    UnsupportedVersion(u32),

    #[error("file truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("payload is {actual} bytes, header implies {expected}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("unknown dtype {0:?}")]
    UnknownDtype(String),

    #[error("unexpected layout: expected {expected}, found {actual}")]
    UnexpectedLayout { expected: String, actual: String },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("{}: malformed JSON: {message}", path.display())]
    MalformedJson { path: PathBuf, message: String },
}
