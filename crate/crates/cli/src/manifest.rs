//! Run manifests: the provenance record each command writes next to its
//! artifacts. Manifests contain no timestamps or host details, so re-running
//! a command on identical inputs produces a byte-identical manifest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io;
use std::path::Path;

/// A file path with the SHA-256 of its contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to audit or reproduce one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// The effective configuration after merging file and flag values.
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub inputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    pub artifacts: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: impl AsRef<Path>) -> io::Result<FileDigest> {
    let path = path.as_ref();
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&fs::read(path)?),
    })
}

impl RunManifest {
    /// Builds a manifest for `command` under the effective `config`,
    /// digesting every input and artifact file.
    pub fn collect(
        command: &str,
        config: &impl Serialize,
        inputs: &[&Path],
        seeds: &[u64],
        artifacts: &[&Path],
    ) -> io::Result<Self> {
        let config = serde_json::to_value(config).map_err(io::Error::other)?;
        // Compact encoding of a sorted-key Value: a canonical hash input.
        let config_sha256 = sha256_hex(config.to_string().as_bytes());
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            config_sha256,
            inputs: inputs
                .iter()
                .map(file_digest)
                .collect::<io::Result<Vec<_>>>()?,
            seeds: seeds.to_vec(),
            artifacts: artifacts
                .iter()
                .map(file_digest)
                .collect::<io::Result<Vec<_>>>()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn digests_match_known_vectors() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn same_inputs_give_identical_manifests() {
        let dir = tempdir().unwrap();
        let input = dir.path().join("in.csv");
        let artifact = dir.path().join("out.csv");
        fs::write(&input, "a,b\n1,2\n").unwrap();
        fs::write(&artifact, "x\n").unwrap();

        #[derive(Serialize)]
        struct Config {
            window: usize,
        }
        let config = Config { window: 60 };
        let a = RunManifest::collect("features", &config, &[&input], &[], &[&artifact]).unwrap();
        let b = RunManifest::collect("features", &config, &[&input], &[], &[&artifact]).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );

        fs::write(&artifact, "y\n").unwrap();
        let c = RunManifest::collect("features", &config, &[&input], &[], &[&artifact]).unwrap();
        assert_ne!(a.artifacts, c.artifacts);
        assert_eq!(a.config_sha256, c.config_sha256);
    }

    #[test]
    fn empty_seed_list_is_omitted_from_json() {
        let dir = tempdir().unwrap();
        let artifact = dir.path().join("out.csv");
        fs::write(&artifact, "x\n").unwrap();
        let manifest =
            RunManifest::collect("synth", &serde_json::json!({}), &[], &[], &[&artifact]).unwrap();
        let text = serde_json::to_string(&manifest).unwrap();
        assert!(!text.contains("seeds"));
        let with_seeds =
            RunManifest::collect("train", &serde_json::json!({}), &[], &[3, 4], &[&artifact])
                .unwrap();
        let text = serde_json::to_string(&with_seeds).unwrap();
        assert!(text.contains("\"seeds\":[3,4]"));
    }
}
