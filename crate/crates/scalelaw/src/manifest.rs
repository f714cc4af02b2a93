//! Atomic file writes and the per-command run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`. Creates missing parent directories.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(parent, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// What produced a set of outputs. Contains no timestamps, so reruns with
/// the same inputs give identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub input_paths: Vec<PathBuf>,
    pub seed: u64,
    pub tool_version: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config_path: Option<&Path>,
        input_paths: Vec<PathBuf>,
        seed: u64,
    ) -> Self {
        Self {
            command: command.into(),
            config_path: config_path.map(Path::to_path_buf),
            input_paths,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs: Vec::new(),
        }
    }

    /// `<stem>.manifest.json` beside a single output file.
    pub fn path_for_file(output: &Path) -> PathBuf {
        let stem = output
            .file_stem()
            .map_or_else(|| "output".into(), |s| s.to_string_lossy().into_owned());
        output.with_file_name(format!("{stem}.manifest.json"))
    }

    /// `manifest.json` inside an output directory.
    pub fn path_for_dir(dir: &Path) -> PathBuf {
        dir.join("manifest.json")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }
}
