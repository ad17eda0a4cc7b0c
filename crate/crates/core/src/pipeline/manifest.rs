//! Stage manifests: content hashes of inputs, upstream manifests and
//! outputs, used to decide whether a stage can be skipped.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    /// Config key naming the file, e.g. `inputs.posts`.
    pub key: String,
    /// Path as written in the config.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpstreamRecord {
    pub stage: String,
    pub manifest_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    /// Data rows for CSV outputs.
    pub rows: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    /// Hash of the stage's configuration parameters.
    pub config_hash: String,
    pub inputs: Vec<InputRecord>,
    pub upstream: Vec<UpstreamRecord>,
    /// Hash over everything above; equal fingerprints mean equal outputs.
    pub fingerprint: String,
    pub outputs: Vec<OutputRecord>,
}

#[derive(Serialize)]
struct FingerprintView<'a> {
    stage: &'a str,
    version: &'a str,
    config_hash: &'a str,
    inputs: &'a [InputRecord],
    upstream: &'a [UpstreamRecord],
}

impl Manifest {
    pub fn new(stage: &str, config_hash: String, inputs: Vec<InputRecord>, upstream: Vec<UpstreamRecord>) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        let view = FingerprintView {
            stage,
            version: &version,
            config_hash: &config_hash,
            inputs: &inputs,
            upstream: &upstream,
        };
        let fingerprint = sha256_hex(&serde_json::to_vec(&view).expect("manifest fields serialize"));
        Manifest {
            stage: stage.to_string(),
            version,
            config_hash,
            inputs,
            upstream,
            fingerprint,
            outputs: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = serde_json::to_vec_pretty(self).expect("manifest serializes");
        b.push(b'\n');
        b
    }

    /// Manifest in `dir`, or `None` when absent or unreadable.
    pub fn read(dir: &Path) -> Option<Manifest> {
        let bytes = std::fs::read(dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    /// First output that is missing or whose content changed.
    pub fn first_bad_output(&self, dir: &Path) -> Option<String> {
        self.outputs
            .iter()
            .find(|o| hash_file(&dir.join(&o.file)).map_or(true, |h| h != o.sha256))
            .map(|o| o.file.clone())
    }
}

/// Data rows of a CSV buffer (lines after the header).
pub fn csv_rows(bytes: &[u8]) -> usize {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    rdr.records().count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_tracks_inputs() {
        let input = |h: &str| InputRecord {
            key: "inputs.posts".into(),
            path: "posts.jsonl".into(),
            sha256: h.into(),
        };
        let a = Manifest::new("ingest", "c".into(), vec![input("1")], vec![]);
        let b = Manifest::new("ingest", "c".into(), vec![input("1")], vec![]);
        let c = Manifest::new("ingest", "c".into(), vec![input("2")], vec![]);
        assert_eq!(a.fingerprint, b.fingerprint);
        assert_ne!(a.fingerprint, c.fingerprint);
        assert_eq!(sha256_hex(b"abc").len(), 64);
    }

    #[test]
    fn counts_csv_rows_with_quoted_newlines() {
        assert_eq!(csv_rows(b"a,b\n1,\"x\ny\"\n2,3\n"), 2);
        assert_eq!(csv_rows(b"a,b\n"), 0);
    }
}
