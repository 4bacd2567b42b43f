use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

/// Output directory; every file is written to a temporary sibling and renamed
/// into place once complete.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn write<F>(&self, name: &str, fill: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let target = self.root.join(name);
        let tmp = NamedTempFile::new_in(&self.root)
            .with_context(|| format!("cannot write to {}", self.root.display()))?;
        let mut out = BufWriter::new(tmp);
        fill(&mut out).with_context(|| format!("writing {}", target.display()))?;
        let tmp = out.into_inner().map_err(|e| e.into_error())?;
        tmp.as_file().sync_all()?;
        tmp.persist(&target)
            .with_context(|| format!("cannot rename into {}", target.display()))?;
        Ok(target)
    }

    pub fn write_json<T: serde::Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }
}
