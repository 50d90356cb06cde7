use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

/// Integrity failure while reading a run directory.
#[derive(Debug)]
pub struct IntegrityError(pub String);

impl std::fmt::Display for IntegrityError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "integrity error: {}", self.0)
    }
}

impl std::error::Error for IntegrityError {}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory that records every file written to it.
pub struct RunDir {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), entries: Vec::new() })
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let bytes = contents.as_ref();
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.entries.retain(|e| e.path != rel);
        self.entries.push(ManifestEntry { path: rel.to_owned(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text)
    }

    /// Writes the manifest (sorted by path); it does not list itself.
    pub fn finish(mut self) -> Result<Manifest> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let m = Manifest { files: self.entries };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        fs::write(self.root.join(MANIFEST), text)?;
        Ok(m)
    }
}

/// Loads the manifest and checks every listed hash against the file on disk.
pub fn verify(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let m: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    for e in &m.files {
        let bytes = fs::read(root.join(&e.path)).map_err(|err| IntegrityError(format!("{}: {err}", e.path)))?;
        let got = sha256_hex(&bytes);
        if got != e.sha256 {
            return Err(IntegrityError(format!("{} in {}: expected {}, found {got}", e.path, root.display(), e.sha256)).into());
        }
    }
    Ok(m)
}

pub fn read_listed(root: &Path, m: &Manifest, rel: &str) -> Result<Option<String>> {
    if !m.files.iter().any(|e| e.path == rel) {
        return Ok(None);
    }
    Ok(Some(fs::read_to_string(root.join(rel))?))
}

pub fn require_dir(p: &Path) -> Result<()> {
    if !p.is_dir() {
        bail!("{} is not a directory", p.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_roundtrip_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let mut rd = RunDir::create(dir.path()).unwrap();
        rd.write("a.csv", "x\n1\n").unwrap();
        rd.write("sub/b.csv", "y\n").unwrap();
        let m = rd.finish().unwrap();
        assert_eq!(m.files.len(), 2);
        assert_eq!(verify(dir.path()).unwrap(), m);
        fs::write(dir.path().join("a.csv"), "x\n2\n").unwrap();
        let err = verify(dir.path()).unwrap_err();
        assert!(err.downcast_ref::<IntegrityError>().is_some());
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
