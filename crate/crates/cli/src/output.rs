//! Output staging: every file of a command is rendered in memory first and
//! only then written, each through a temporary file renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new() -> Self {
        Outputs::default()
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::other(e.to_string()))?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    /// Writes everything into `dir`, creating it if needed.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::other(format!("{}: {e}", dir.display())))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let target = dir.join(&name);
            write_atomic(&target, &bytes)?;
            written.push(target);
        }
        Ok(written)
    }
}

pub fn write_atomic(target: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match target.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let fail = |e: &dyn std::fmt::Display| CliError::other(format!("{}: {e}", target.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(bytes).map_err(|e| fail(&e))?;
    tmp.persist(target).map_err(|e| fail(&e.error))?;
    Ok(())
}
