use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Files staged in memory and written only once every computation has
/// succeeded, each through a temporary file renamed into place.
#[derive(Debug, Default)]
pub struct PendingWrites {
    files: Vec<(PathBuf, Vec<u8>)>,
    stdout: Vec<u8>,
}

impl PendingWrites {
    pub fn file(&mut self, path: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((path.into(), bytes.into()));
    }

    /// Writes to `path`, or to stdout when there is none.
    pub fn file_or_stdout(&mut self, path: Option<&Path>, bytes: impl Into<Vec<u8>>) {
        match path {
            Some(p) => self.file(p, bytes),
            None => self.stdout.extend(bytes.into()),
        }
    }

    pub fn commit(self) -> Result<()> {
        for (path, bytes) in &self.files {
            write_atomic(path, bytes)?;
        }
        if !self.stdout.is_empty() {
            let mut out = std::io::stdout().lock();
            out.write_all(&self.stdout)?;
            out.flush()?;
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("cannot write in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn to_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}
