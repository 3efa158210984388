use std::path::{Path, PathBuf};

use hardnet::kv::KeyValues;
use hardnet::Result;
use sha2::{Digest, Sha256};

/// Resolved settings plus hashes of everything read and written.
pub struct Manifest {
    kv: KeyValues,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Hash over the sorted regular files of a directory, names included.
pub fn sha256_dir(dir: &Path) -> Result<String> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != "manifest.txt"))
        .collect();
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.file_name().expect("file").to_string_lossy().as_bytes());
        h.update(std::fs::read(&f)?);
    }
    Ok(hex::encode(h.finalize()))
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut kv = KeyValues::new();
        kv.set("command", command);
        kv.set("version", env!("CARGO_PKG_VERSION"));
        Self { kv }
    }

    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) {
        self.kv.set(key, value);
    }

    pub fn extend(&mut self, prefix: &str, kv: &KeyValues) {
        for k in kv.keys() {
            self.kv.set(&format!("{prefix}{k}"), kv.get(k).expect("listed key"));
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        let hash = if path.is_dir() {
            sha256_dir(path)?
        } else {
            sha256_file(path)?
        };
        self.kv.set(&format!("input.{name}"), path.display());
        self.kv.set(&format!("input.{name}.sha256"), hash);
        Ok(())
    }

    pub fn artifact(&mut self, name: &str, path: &Path) -> Result<()> {
        let hash = if path.is_dir() {
            sha256_dir(path)?
        } else {
            sha256_file(path)?
        };
        self.kv.set(&format!("artifact.{name}"), path.display());
        self.kv.set(&format!("artifact.{name}.sha256"), hash);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.kv.to_text())?;
        Ok(())
    }
}

/// `<path>.<suffix>` next to an output file.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
