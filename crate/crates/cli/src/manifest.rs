use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct SpecRecord {
    pub eps: Vec<f64>,
    pub norm: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// `sha256:<hex>` of the input file, or `synthetic` for generated data.
    pub input_digest: String,
    pub spec: SpecRecord,
    pub seed: u64,
    pub versions: BTreeMap<&'static str, &'static str>,
    /// Milliseconds per phase; absent under `--no-timings`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<&'static str, f64>>,
}

impl RunManifest {
    pub fn new(command: &str, input_digest: String, spec: SpecRecord, seed: u64) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("advbound", env!("CARGO_PKG_VERSION"));
        versions.insert("dataset_format", "RBND1");
        RunManifest {
            command: command.to_string(),
            input_digest,
            spec,
            seed,
            versions,
            timings_ms: None,
        }
    }
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    Ok(format!("sha256:{hex}"))
}

/// Accumulates wall-clock time per named phase.
#[derive(Debug, Default)]
pub struct PhaseTimer {
    phases: BTreeMap<&'static str, f64>,
}

impl PhaseTimer {
    pub fn time<T>(&mut self, phase: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.phases.entry(phase).or_insert(0.0) += start.elapsed().as_secs_f64() * 1e3;
        out
    }

    pub fn finish(self, enabled: bool) -> Option<BTreeMap<&'static str, f64>> {
        enabled.then_some(self.phases)
    }
}
