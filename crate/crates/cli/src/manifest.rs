use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use negrec_core::Error;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct InputDigest {
    path: PathBuf,
    sha256: String,
}

/// Record of one run: what was asked for, what was read and what was
/// written. Contains no timestamps so reruns produce identical files.
#[derive(Serialize)]
pub struct Manifest {
    command: &'static str,
    version: &'static str,
    seed: u64,
    config: Value,
    notes: BTreeMap<String, String>,
    inputs: Vec<InputDigest>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &'static str, config: &C, seed: u64) -> Self {
        Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            notes: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Error> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn input_opt(&mut self, path: Option<&Path>) -> Result<(), Error> {
        path.map_or(Ok(()), |p| self.input(p))
    }

    pub fn note(&mut self, key: &str, value: &str) {
        self.notes.insert(key.into(), value.into());
    }

    pub fn outputs<P: AsRef<Path>>(&mut self, paths: impl IntoIterator<Item = P>) {
        self.outputs.extend(paths.into_iter().map(|p| p.as_ref().to_path_buf()));
    }

    pub fn write(&self, dir: &Path) -> Result<(), Error> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}
