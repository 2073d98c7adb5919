//! Run manifests: a JSON record per command listing the exact inputs
//! (config digest, seeds) and outputs (paths, digests, sizes) of a run,
//! plus wall-clock timings. Outputs are byte-hashed, so two manifests with
//! equal config digests and seeds certify bit-identical artifacts even
//! when their timing blocks differ.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub config_sha256: String,
    pub core_version: String,
    pub cli_version: String,
    /// Every random seed the run consumed, keyed by purpose. Empty for
    /// fully deterministic commands.
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<OutputRecord>,
    pub timings_ms: BTreeMap<String, u128>,
}

impl RunManifest {
    pub fn new(command: &str, config_path: &Path, config_bytes: &[u8]) -> Self {
        RunManifest {
            command: command.to_string(),
            config_path: config_path.display().to_string(),
            config_sha256: sha256_hex(config_bytes),
            core_version: breather_core::VERSION.to_string(),
            cli_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: BTreeMap::new(),
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    /// Hashes an already-written artifact and appends it to the listing.
    pub fn record_output(&mut self, path: &Path) -> io::Result<()> {
        let bytes = fs::read(path)?;
        self.outputs.push(OutputRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Writes `<command>.manifest.json` into the output directory. The
    /// manifest itself is not part of its own output listing.
    pub fn write(&self, out_dir: &Path) -> io::Result<()> {
        let path = out_dir.join(format!("{}.manifest.json", self.command));
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, body)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write;
        write!(out, "{b:02x}").expect("hex formatting");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_the_known_empty_and_abc_digests() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
            "empty-input digest is a published constant"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
            "abc digest is a published constant"
        );
    }

    #[test]
    fn manifest_lists_outputs_with_digests() {
        let dir = tempfile::tempdir().expect("tempdir");
        let artifact = dir.path().join("a.txt");
        fs::write(&artifact, b"abc").unwrap();
        let mut m = RunManifest::new("solve", Path::new("cfg.json"), b"{}");
        m.record_output(&artifact).unwrap();
        m.timings_ms.insert("total".into(), 1);
        m.write(dir.path()).unwrap();
        let body = fs::read_to_string(dir.path().join("solve.manifest.json")).unwrap();
        assert!(
            body.contains("ba7816bf8f01cfea"),
            "output digest missing from manifest: {body}"
        );
        assert!(body.contains("\"config_sha256\""));
    }
}
