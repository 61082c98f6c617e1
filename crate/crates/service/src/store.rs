//! Content-addressed artifact store on disk.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Dataset,
    Model,
    Shape,
    Result,
    Mesh,
}

impl ArtifactKind {
    pub fn dir(self) -> &'static str {
        match self {
            Self::Dataset => "datasets",
            Self::Model => "models",
            Self::Shape => "shapes",
            Self::Result => "results",
            Self::Mesh => "meshes",
        }
    }

    fn ext(self) -> &'static str {
        match self {
            Self::Dataset => "csv",
            Self::Model => "surrogate.json",
            Self::Shape => "json",
            Self::Result => "json",
            Self::Mesh => "stl",
        }
    }

    pub const ALL: [Self; 5] = [Self::Dataset, Self::Model, Self::Shape, Self::Result, Self::Mesh];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Hex SHA-256 of the content.
    pub id: String,
    pub kind: ArtifactKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Path relative to the store root.
    pub file: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Manifest {
    artifacts: Vec<Artifact>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("name {name:?} already refers to a different {kind:?} artifact")]
    Conflict { kind: ArtifactKind, name: String },
    #[error("no {kind:?} artifact {key:?}")]
    NotFound { kind: ArtifactKind, key: String },
    #[error("corrupt manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Inconsistencies between the manifest and the files on disk.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StoreReport {
    pub missing: Vec<String>,
    pub corrupted: Vec<String>,
    pub unindexed: Vec<String>,
}

impl StoreReport {
    pub fn is_consistent(&self) -> bool {
        self.missing.is_empty() && self.corrupted.is_empty() && self.unindexed.is_empty()
    }
}

/// Artifacts are written once under their content hash and never modified.
pub struct ProjectStore {
    root: PathBuf,
    manifest: Mutex<Manifest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

impl ProjectStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for k in ArtifactKind::ALL {
            fs::create_dir_all(root.join(k.dir()))?;
        }
        let path = root.join(MANIFEST);
        let manifest = if path.exists() { serde_json::from_slice(&fs::read(&path)?)? } else { Manifest::default() };
        Ok(Self { root, manifest: Mutex::new(manifest) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Stores `bytes`; returns the existing entry if the content is already present.
    pub fn put(&self, kind: ArtifactKind, name: Option<&str>, bytes: &[u8]) -> Result<Artifact, StoreError> {
        let id = sha256_hex(bytes);
        let mut m = self.manifest.lock().unwrap();
        if let Some(name) = name {
            if m.artifacts.iter().any(|a| a.kind == kind && a.name.as_deref() == Some(name) && a.id != id) {
                return Err(StoreError::Conflict { kind, name: name.to_owned() });
            }
        }
        if let Some(a) = m.artifacts.iter().find(|a| a.kind == kind && a.id == id && (name.is_none() || a.name.as_deref() == name)) {
            return Ok(a.clone());
        }
        let file = format!("{}/{}.{}", kind.dir(), id, kind.ext());
        let path = self.root.join(&file);
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        let a = Artifact { id, kind, name: name.map(str::to_owned), file, bytes: bytes.len() as u64 };
        m.artifacts.push(a.clone());
        write_atomic(&self.root.join(MANIFEST), serde_json::to_string_pretty(&*m)?.as_bytes())?;
        Ok(a)
    }

    /// Finds an artifact by id, unique id prefix of at least 8 characters, or name.
    pub fn find(&self, kind: ArtifactKind, key: &str) -> Result<Artifact, StoreError> {
        let m = self.manifest.lock().unwrap();
        let of_kind = || m.artifacts.iter().filter(|a| a.kind == kind);
        let hit = of_kind()
            .find(|a| a.id == key)
            .or_else(|| of_kind().rev().find(|a| a.name.as_deref() == Some(key)))
            .or_else(|| {
                let mut it = of_kind().filter(|a| key.len() >= 8 && a.id.starts_with(key));
                match (it.next(), it.next()) {
                    (Some(a), None) => Some(a),
                    _ => None,
                }
            });
        hit.cloned().ok_or_else(|| StoreError::NotFound { kind, key: key.to_owned() })
    }

    pub fn read(&self, a: &Artifact) -> Result<Vec<u8>, StoreError> {
        Ok(fs::read(self.root.join(&a.file))?)
    }

    pub fn path(&self, a: &Artifact) -> PathBuf {
        self.root.join(&a.file)
    }

    pub fn list(&self, kind: ArtifactKind) -> Vec<Artifact> {
        self.manifest.lock().unwrap().artifacts.iter().filter(|a| a.kind == kind).cloned().collect()
    }

    /// Re-hashes every indexed file and looks for files the manifest does not know.
    pub fn verify(&self) -> Result<StoreReport, StoreError> {
        let m = self.manifest.lock().unwrap();
        let mut r = StoreReport::default();
        for a in &m.artifacts {
            match fs::read(self.root.join(&a.file)) {
                Ok(b) if sha256_hex(&b) == a.id => {}
                Ok(_) => r.corrupted.push(a.file.clone()),
                Err(_) => r.missing.push(a.file.clone()),
            }
        }
        for k in ArtifactKind::ALL {
            for e in fs::read_dir(self.root.join(k.dir()))? {
                let file = format!("{}/{}", k.dir(), e?.file_name().to_string_lossy());
                if !m.artifacts.iter().any(|a| a.file == file) {
                    r.unindexed.push(file);
                }
            }
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_addressing_and_conflicts() {
        let dir = tempfile::tempdir().unwrap();
        let s = ProjectStore::open(dir.path()).unwrap();
        let a = s.put(ArtifactKind::Dataset, Some("grid"), b"r_in\n").unwrap();
        let again = s.put(ArtifactKind::Dataset, Some("grid"), b"r_in\n").unwrap();
        assert_eq!(a, again);
        assert!(matches!(s.put(ArtifactKind::Dataset, Some("grid"), b"other\n"), Err(StoreError::Conflict { .. })));
        assert_eq!(s.find(ArtifactKind::Dataset, "grid").unwrap(), a);
        assert_eq!(s.find(ArtifactKind::Dataset, &a.id[..10]).unwrap(), a);
        assert!(s.find(ArtifactKind::Model, "grid").is_err());
        assert_eq!(s.read(&a).unwrap(), b"r_in\n");
        assert!(s.verify().unwrap().is_consistent());

        // survives reopening
        drop(s);
        let s = ProjectStore::open(dir.path()).unwrap();
        assert_eq!(s.list(ArtifactKind::Dataset).len(), 1);

        fs::write(dir.path().join("models/stray.json"), b"{}").unwrap();
        fs::write(s.path(&a), b"tampered").unwrap();
        let r = s.verify().unwrap();
        assert_eq!(r.unindexed, vec!["models/stray.json".to_owned()]);
        assert_eq!(r.corrupted.len(), 1);
    }
}
