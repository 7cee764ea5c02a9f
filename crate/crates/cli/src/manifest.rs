use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use patchforge::kv::KvMap;
use patchforge::{Error, Result};

use crate::Global;

pub const MANIFEST: &str = "run.manifest";

/// Seconds since the epoch; zero in deterministic mode, `SOURCE_DATE_EPOCH`
/// when set.
fn timestamp(g: &Global) -> u64 {
    if g.deterministic {
        return 0;
    }
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Record of one command invocation, written into its output directory.
#[derive(Debug, Clone)]
pub struct RunManifest {
    command: String,
    seed: u64,
    start: u64,
    config: KvMap,
    outputs: Vec<String>,
    results: KvMap,
}

impl RunManifest {
    pub fn start(command: &str, seed: u64, g: &Global) -> Self {
        RunManifest { command: command.into(), seed, start: timestamp(g), config: KvMap::new(), outputs: Vec::new(), results: KvMap::new() }
    }

    pub fn config(mut self, config: KvMap) -> Self {
        self.config = config;
        self
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.set(key, value);
    }

    pub fn output(&mut self, name: &str) {
        self.outputs.push(name.into());
    }

    pub fn result(&mut self, key: &str, value: impl ToString) {
        self.results.set(key, value);
    }

    /// Writes `dir/run.manifest` via a temporary file and a rename.
    pub fn finish(self, dir: &Path, g: &Global) -> Result<()> {
        let mut m = KvMap::new();
        m.set("command", &self.command);
        m.set("seed", self.seed);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m.set("start", self.start);
        m.set("end", timestamp(g));
        m.set("outputs", self.outputs.join(","));
        for k in self.config.keys() {
            m.set(&format!("config.{k}"), self.config.get_str(k).unwrap_or_default());
        }
        for k in self.results.keys() {
            m.set(&format!("result.{k}"), self.results.get_str(k).unwrap_or_default());
        }
        let tmp = dir.join(format!(".{MANIFEST}.tmp"));
        fs::write(&tmp, m.to_text()).map_err(|e| Error::io(&tmp, e))?;
        let path = dir.join(MANIFEST);
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}
