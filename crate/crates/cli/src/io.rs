//! All-or-nothing output: files are written to temporaries next to their
//! destination and renamed into place together.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use tempfile::NamedTempFile;

#[derive(Default)]
pub struct StagedWrites {
    pending: Vec<(NamedTempFile, PathBuf)>,
}

impl StagedWrites {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create directory {}", dir.display()))?;
        let mut tmp = NamedTempFile::new_in(&dir).with_context(|| format!("cannot write into {}", dir.display()))?;
        tmp.write_all(bytes)
            .and_then(|_| tmp.as_file().sync_all())
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.pending.push((tmp, path.to_path_buf()));
        Ok(())
    }

    /// Move every staged file into place. If any rename fails, files
    /// already moved are removed again.
    pub fn commit(self) -> anyhow::Result<()> {
        let mut done: Vec<PathBuf> = Vec::new();
        for (tmp, path) in self.pending {
            if let Err(e) = tmp.persist(&path) {
                for p in &done {
                    let _ = std::fs::remove_file(p);
                }
                return Err(e.error).with_context(|| format!("cannot move output into place at {}", path.display()));
            }
            done.push(path);
        }
        Ok(())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let mut s = StagedWrites::new();
    s.add(path, bytes)?;
    s.commit()
}

pub fn read_text(path: &Path, what: &str) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))
}
