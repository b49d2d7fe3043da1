//! File formats, experiment drivers and the command-line front end for
//! `poirec-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::fs;
use std::path::Path;

pub use config::RunConfig;
pub use error::{CliError, Result};

pub fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(CliError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Writes `text`, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}
