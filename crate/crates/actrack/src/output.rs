//! All-or-nothing file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::io_mot::MotError;

fn staged(path: &Path, bytes: &[u8]) -> Result<NamedTempFile, MotError> {
    let err = |source| MotError::Write { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    Ok(tmp)
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), MotError> {
    staged(path, bytes)?
        .persist(path)
        .map(|_| ())
        .map_err(|e| MotError::Write { path: path.to_path_buf(), source: e.error })
}

/// Files produced by one command, written together or not at all.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((path.into(), bytes.into()));
    }

    /// Stage every file, then rename them into place. If a rename fails,
    /// files already renamed by this call are removed again.
    pub fn commit(self) -> Result<(), MotError> {
        let mut staged_files = Vec::with_capacity(self.files.len());
        for (path, bytes) in &self.files {
            staged_files.push((path.clone(), staged(path, bytes)?));
        }
        let mut done: Vec<PathBuf> = Vec::new();
        for (path, tmp) in staged_files {
            if let Err(e) = tmp.persist(&path) {
                for p in &done {
                    let _ = fs::remove_file(p);
                }
                return Err(MotError::Write { path, source: e.error });
            }
            done.push(path);
        }
        Ok(())
    }
}
