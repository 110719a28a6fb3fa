//! File formats, training driver, command line and HTTP service around
//! `sketchedit-core`.

pub mod api;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod forge;
pub mod imageio;
pub mod server;
pub mod shard;
pub mod train;

use std::path::Path;

pub use error::{AppError, Result};

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| AppError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}
