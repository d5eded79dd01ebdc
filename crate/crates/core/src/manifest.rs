//! Provenance record written next to every command's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex sha256 of a file's bytes.
pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Every flag the command ran with.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub deterministic: bool,
    pub threads: usize,
    /// path -> sha256
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub timings: Vec<StageTiming>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: Option<u64>, deterministic: bool) -> Result<Self> {
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            deterministic,
            threads: rayon::current_num_threads(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings: Vec::new(),
        })
    }

    pub fn input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let p = path.as_ref();
        self.inputs.insert(p.display().to_string(), sha256_file(p)?);
        Ok(())
    }

    pub fn output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let p = path.as_ref();
        self.outputs.insert(p.display().to_string(), sha256_file(p)?);
        Ok(())
    }

    /// Runs `f`, recording its wall-clock time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f()?;
        self.timings.push(StageTiming { stage: stage.to_string(), seconds: t.elapsed().as_secs_f64() });
        Ok(r)
    }

    /// Re-hashes every recorded input and fails on the first difference.
    pub fn verify_inputs(&self) -> Result<()> {
        for (path, hash) in &self.inputs {
            let now = sha256_file(path)?;
            if &now != hash {
                return Err(Error::Invalid(format!("input {path} changed since the run (sha256 {now} != {hash})")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Where a command's manifest goes: `run.json` inside an output directory,
/// `<file>.run.json` beside an output file.
pub fn manifest_path(output: impl AsRef<Path>) -> PathBuf {
    let o = output.as_ref();
    if o.is_dir() {
        o.join("run.json")
    } else {
        let mut s = o.as_os_str().to_owned();
        s.push(".run.json");
        PathBuf::from(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_and_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        fs::write(&f, "abc").unwrap();
        assert_eq!(sha256_file(&f).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let mut m = RunManifest::new("test", &serde_json::json!({"k": 1}), Some(3), true).unwrap();
        m.input(&f).unwrap();
        let v = m.time("stage", || Ok(5)).unwrap();
        assert_eq!(v, 5);
        assert_eq!(m.timings.len(), 1);
        m.verify_inputs().unwrap();
        let mp = manifest_path(&f);
        m.save(&mp).unwrap();
        assert_eq!(RunManifest::load(&mp).unwrap(), m);
        fs::write(&f, "abd").unwrap();
        assert!(m.verify_inputs().is_err());
        assert_eq!(manifest_path(dir.path()), dir.path().join("run.json"));
    }
}
