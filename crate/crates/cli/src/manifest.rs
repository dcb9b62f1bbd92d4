use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use spinphoton::config::ConfigFile;
use spinphoton::runner::{RunSummary, StopCriterion};

pub const MANIFEST_NAME: &str = "manifest.toml";

/// Provenance of one `simulate` invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub stop: StopCriterion,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub outputs: Vec<String>,
    pub summary: RunSummary,
    pub config: ConfigFile,
}

impl RunManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest is always representable")
    }
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}
