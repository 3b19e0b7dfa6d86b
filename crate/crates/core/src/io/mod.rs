//! Everything that touches bytes: preprocessing, the detector port, the
//! on-disk store, external ingestion, flat files and the per-second runtime.

pub mod detector;
pub mod files;
pub mod ingest;
pub mod pipeline;
pub mod preprocess;
pub mod store;

use std::path::PathBuf;

use thiserror::Error;

use crate::model::{SessionId, Timestamp};

/// First line of every CSV output.
pub const CSV_SCHEMA_HEADER: &str = "# ward-sentinel schema v1";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("input frame {width}x{height} is below the 64 px minimum")]
    TooSmallInput { width: usize, height: usize },
    #[error("{path}: {err}")]
    File { path: PathBuf, err: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: schema mismatch: {reason}")]
    SchemaMismatch { path: PathBuf, reason: String },
    #[error("unknown adapter '{0}'")]
    UnknownAdapter(String),
    #[error("session {session} at ts {ts}: {reason}")]
    Adapter {
        session: SessionId,
        ts: Timestamp,
        reason: String,
    },
    #[error("session {0} already has stored segments")]
    SessionExists(SessionId),
    #[error("session {session}: ts {ts} does not follow {prev}")]
    NonMonotonic {
        session: SessionId,
        prev: Timestamp,
        ts: Timestamp,
    },
    #[error("segment {segment} hash mismatch (manifest {expected}, disk {actual})")]
    Integrity {
        segment: String,
        expected: String,
        actual: String,
    },
}

impl IoError {
    pub fn file(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> IoError {
        let path = path.into();
        move |err| IoError::File { path, err }
    }

    /// Errors caused by bad input rather than by the program or the system.
    pub fn is_validation(&self) -> bool {
        !matches!(self, IoError::File { .. } | IoError::Integrity { .. })
    }
}
