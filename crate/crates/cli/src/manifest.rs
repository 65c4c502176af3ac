//! Run manifests: an ordered `key=value` record of everything a run depends
//! on, written before the run touches any other output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cae_core::{CaeError, Result, TrainConfig};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
}

pub fn tool_version() -> String {
    format!("cae {}", env!("CARGO_PKG_VERSION"))
}

/// Lower-case hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CaeError::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("tool", tool_version());
        m.set("command", command);
        m
    }

    /// Sets `key`, replacing an earlier value in place.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Records `key=path` and `key_sha256=<hash of its contents>`.
    pub fn add_input(&mut self, key: &str, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.set(key, path.display());
        self.set(&format!("{key}_sha256"), hash);
        Ok(())
    }

    /// Records every training config key under `config.`.
    pub fn add_config(&mut self, config: &TrainConfig) {
        for line in config.to_kv_string().lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.set(&format!("config.{k}"), v);
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| CaeError::Parse {
                what: "manifest",
                detail: format!("bad line {line:?}"),
            })?;
            m.set(k, v);
        }
        Ok(m)
    }

    /// Writes to `path`, creating its parent directory.
    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CaeError::io(dir, e))?;
        }
        fs::write(path, self.to_text()).map_err(|e| CaeError::io(path, e))?;
        Ok(path.to_path_buf())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_keeps_order() {
        let mut m = RunManifest::new("train");
        m.set("seed", 7);
        m.set("b", "x=y");
        m.set("seed", 8);
        let back = RunManifest::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get("seed"), Some("8"));
        assert_eq!(back.get("b"), Some("x=y"));
        assert_eq!(back.entries()[1].0, "command");
    }

    #[test]
    fn config_keys_are_prefixed() {
        let mut m = RunManifest::new("train");
        m.add_config(&TrainConfig::default());
        assert_eq!(m.get("config.lambda1"), Some("0.1"));
        assert_eq!(m.get("config.lambda3"), Some("1.0"));
    }

    #[test]
    fn hashes_file_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
