use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

use pdecast_core::write_atomic;

/// Provenance record written next to every output.
pub struct Manifest {
    command: &'static str,
    started: Instant,
    config: Map<String, Value>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seeds: Vec<u64>,
}

impl Manifest {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            config: Map::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.config.insert(key.to_string(), value.into());
    }

    pub fn seed(&mut self, seed: u64) {
        self.seeds.push(seed);
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    pub fn write(&self, path: &Path, status: &str) -> pdecast_core::Result<()> {
        let finished = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let paths = |ps: &[PathBuf]| ps.iter().map(|p| p.display().to_string()).collect::<Vec<_>>();
        let doc = json!({
            "command": self.command,
            "status": status,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": paths(&self.inputs),
            "outputs": paths(&self.outputs),
            "duration_seconds": self.started.elapsed().as_secs_f64(),
            "finished_unix": finished,
            "artifact_version": env!("CARGO_PKG_VERSION"),
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("manifest is valid JSON");
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

/// `<file>.manifest.json` beside a single-file output.
pub fn beside(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}
