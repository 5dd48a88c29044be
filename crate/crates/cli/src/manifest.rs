//! Run manifests: what went into a command and what came out of it.

use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub role: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Full configuration after flag overrides.
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub artifacts: Vec<Artifact>,
    pub results: serde_json::Value,
    pub started_at: String,
    pub finished_at: Option<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn sha256_file(path: &Path) -> anyhow::Result<(String, u64)> {
    let mut file = std::fs::File::open(path).with_context(|| format!("{}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = file
            .read(&mut buf)
            .with_context(|| format!("{}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), total))
}

impl RunManifest {
    /// Starts a manifest, digesting every input before anything reads it.
    pub fn begin(
        command: &str,
        seed: Option<u64>,
        config: serde_json::Value,
        inputs: &[(&str, &Path)],
    ) -> anyhow::Result<Self> {
        let started_at = now();
        let inputs = inputs
            .iter()
            .map(|&(role, path)| {
                let (sha256, bytes) = sha256_file(path)?;
                Ok(InputDigest {
                    role: role.to_owned(),
                    path: path.to_path_buf(),
                    sha256,
                    bytes,
                })
            })
            .collect::<anyhow::Result<_>>()?;
        Ok(RunManifest {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed,
            config,
            inputs,
            artifacts: Vec::new(),
            results: serde_json::Value::Null,
            started_at,
            finished_at: None,
        })
    }

    pub fn artifact(&mut self, role: &str, path: &Path) {
        self.artifacts.push(Artifact {
            role: role.to_owned(),
            path: path.to_path_buf(),
        });
    }

    /// Stamps the finish time and writes `manifest-<command>.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> anyhow::Result<PathBuf> {
        self.finished_at = Some(now());
        let path = dir.join(format!("manifest-{}.json", self.command));
        let json = serde_json::to_string_pretty(&self)?;
        std::fs::write(&path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_value() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        std::fs::write(&p, "abc").unwrap();
        let (hex, n) = sha256_file(&p).unwrap();
        assert_eq!(n, 3);
        assert_eq!(
            hex,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn missing_input_fails_before_start() {
        let err = RunManifest::begin(
            "x",
            None,
            serde_json::Value::Null,
            &[("text", Path::new("/no/such/file"))],
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("/no/such/file"));
    }
}
