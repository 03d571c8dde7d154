//! Run manifests: the resolved configuration of a command plus checksums of everything it
//! read and wrote.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliResult;
use crate::io::{read_bytes, to_json, write_bytes};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: Option<u64>,
    /// The command's arguments after defaults and output-directory resolution.
    pub config: serde_json::Value,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Records file traffic for one command run.
#[derive(Debug, Default)]
pub struct Recorder {
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

impl Recorder {
    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = read_bytes(path)?;
        self.inputs.push(Artifact {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        write_bytes(path, bytes)?;
        self.outputs.push(Artifact {
            path: path.to_path_buf(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Writes the manifest next to the outputs and returns its path.
    pub fn finish<C: Serialize>(
        self,
        command: &str,
        seed: Option<u64>,
        config: &C,
        manifest_path: &Path,
    ) -> CliResult<(RunManifest, PathBuf)> {
        let manifest = RunManifest {
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config).expect("serialisable config"),
            inputs: self.inputs,
            outputs: self.outputs,
        };
        write_bytes(manifest_path, &to_json(&manifest))?;
        Ok((manifest, manifest_path.to_path_buf()))
    }
}
