//! Run manifests: what a command read, what it wrote, and how long it took.

use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: &'static str,
    pub config: RunConfig,
    pub inputs: Vec<FileHash>,
    pub artifacts: Vec<FileHash>,
    pub wall_seconds: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn hash_entry(path: &Path) -> io::Result<FileHash> {
    Ok(FileHash {
        path: path.to_path_buf(),
        sha256: sha256_file(path)?,
    })
}

impl RunManifest {
    pub fn start(command: &str, config: &RunConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            version: env!("CARGO_PKG_VERSION"),
            config: config.clone(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
            wall_seconds: 0.0,
            started: Some(Instant::now()),
        }
    }

    /// Hashes a file read by the command. Directories are skipped.
    pub fn input(&mut self, path: &Path) -> io::Result<()> {
        if path.is_file() {
            self.inputs.push(hash_entry(path)?);
        }
        Ok(())
    }

    pub fn artifact(&mut self, path: &Path) -> io::Result<()> {
        self.artifacts.push(hash_entry(path)?);
        Ok(())
    }

    /// Stamps the wall time and writes the manifest as pretty JSON.
    pub fn finish(mut self, path: &Path) -> io::Result<()> {
        if let Some(t) = self.started {
            self.wall_seconds = t.elapsed().as_secs_f64();
        }
        let json = serde_json::to_string_pretty(&self).map_err(io::Error::other)?;
        std::fs::write(path, json + "\n")?;
        log::info!("run manifest: {}", path.display());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lists_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("in.txt");
        std::fs::write(&p, b"x").unwrap();
        let mut m = RunManifest::start("test", &RunConfig::default());
        m.input(&p).unwrap();
        m.input(dir.path()).unwrap();
        m.artifact(&p).unwrap();
        let out = dir.path().join("run_manifest.json");
        m.finish(&out).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(v["inputs"].as_array().unwrap().len(), 1);
        assert_eq!(v["artifacts"][0]["sha256"], v["inputs"][0]["sha256"]);
        assert!(v["config"]["model"]["d"].is_number());
    }
}
