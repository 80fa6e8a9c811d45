use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use lexcluster::hashing::sha256_hex;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let fail = |e: std::io::Error| CliError::Data(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents.as_bytes()).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

pub fn file_hash(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// The one-line JSON report printed on success.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: &'static str,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<&'static str, Value>,
    #[serde(skip)]
    pending: Vec<(PathBuf, String)>,
}

impl Summary {
    pub fn new(command: &'static str, seed: u64) -> Self {
        Summary {
            command,
            seed,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            details: BTreeMap::new(),
            pending: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let hash = file_hash(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    /// Queues an output; nothing is written until [`Summary::commit`].
    pub fn output(&mut self, path: &Path, contents: String) {
        self.outputs.push(path.display().to_string());
        self.pending.push((path.to_path_buf(), contents));
    }

    pub fn detail(&mut self, key: &'static str, value: impl Serialize) {
        self.details
            .insert(key, serde_json::to_value(value).expect("detail serializes"));
    }

    pub fn commit(mut self) -> Result<String, CliError> {
        for (path, contents) in std::mem::take(&mut self.pending) {
            write_atomic(&path, &contents)?;
        }
        Ok(serde_json::to_string(&self).expect("summary serializes"))
    }
}
