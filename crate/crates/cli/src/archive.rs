//! Run archive: output files with their content hashes and a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub kind: String,
    pub seed: u64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// File name to lowercase hex SHA-256.
    pub files: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn read(dir: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        serde_json::from_str(&text).map_err(io::Error::other)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory being filled by a run. Writes happen on the calling
/// thread only.
#[derive(Debug)]
pub struct Archive {
    dir: PathBuf,
    files: BTreeMap<String, String>,
    warnings: Vec<String>,
}

impl Archive {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Archive {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
            warnings: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        let w = w.into();
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn finish(self, kind: &str, seed: u64, error: Option<String>) -> io::Result<Manifest> {
        let m = Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            kind: kind.to_string(),
            seed,
            status: if error.is_some() { Status::Failed } else { Status::Complete },
            error,
            files: self.files,
            warnings: self.warnings,
        };
        let mut text = serde_json::to_string_pretty(&m).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_input() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Archive::create(dir.path()).unwrap();
        a.write("x.csv", b"a,b\n1,2\n").unwrap();
        a.warn("w");
        a.warn("w");
        let m = a.finish("msfem", 3, None).unwrap();
        assert_eq!(m.warnings.len(), 1);
        assert_eq!(Manifest::read(dir.path()).unwrap(), m);
    }
}
