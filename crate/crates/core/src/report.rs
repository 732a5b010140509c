//! Run manifests: every CLI invocation records its resolved configuration,
//! seed and outputs so a run can be reproduced byte for byte (modulo the
//! wall-time field).

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub artifact_version: String,
    pub wall_time_ms: u128,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            config,
            seed,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ms: 0,
            outputs: Vec::new(),
        }
    }
}
