//! File formats, synthetic inputs and the dense reference evaluator.

mod mtx;
mod oracle;
mod synth;
mod tns;

pub use mtx::{read_mtx, read_mtx_str, write_mtx, write_mtx_string};
pub use oracle::{oracle_eval, DenseTensor};
pub use synth::{split_duplicates, synth, Synth};
pub use tns::{read_tns, read_tns_str, write_dims_sidecar, write_tns, write_tns_string};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: coordinate {coord:?} outside declared dimensions {dims:?}")]
    OutOfBounds {
        line: usize,
        coord: Vec<i64>,
        dims: Vec<usize>,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

fn read_file(path: &std::path::Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &std::path::Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Shortest text that parses back to the same value.
fn fmt_value<T: crate::Scalar>(v: T) -> String {
    format!("{:e}", v.to_f64_lossy())
}
