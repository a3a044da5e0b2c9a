//! Run manifests. The manifest holds everything that determines the outputs
//! and nothing that does not (no paths, times or thread counts), so its
//! digest names the result.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::io::{json_bytes, sha256_hex, InputDigest};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

impl Default for Software {
    fn default() -> Self {
        Software {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub command: String,
    pub software: Software,
    /// Echo of the effective configuration; usable as a config file.
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    /// Precondition warnings raised before estimation.
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new<C: Serialize>(
        command: &str,
        config: &C,
        inputs: Vec<InputDigest>,
        warnings: Vec<String>,
    ) -> Self {
        RunManifest {
            manifest_version: 1,
            command: command.into(),
            software: Software::default(),
            config: serde_json::to_value(config).expect("config serializes"),
            inputs,
            warnings,
        }
    }

    /// SHA-256 of the bytes written to manifest.json.
    pub fn digest(&self) -> String {
        sha256_hex(&json_bytes(self))
    }
}

/// Wall-clock phases of a run. Kept apart from the manifest because it
/// changes from run to run.
#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub command: String,
    pub workers: usize,
    pub phases: Vec<Phase>,
    #[serde(skip)]
    last: Option<Instant>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

impl Timing {
    pub fn start(command: &str, workers: usize) -> Self {
        Timing {
            command: command.into(),
            workers,
            phases: Vec::new(),
            last: Some(Instant::now()),
        }
    }

    pub fn lap(&mut self, name: &str) {
        let now = Instant::now();
        let since = self.last.replace(now).unwrap_or(now);
        self.phases.push(Phase {
            name: name.into(),
            seconds: (now - since).as_secs_f64(),
        });
    }
}
