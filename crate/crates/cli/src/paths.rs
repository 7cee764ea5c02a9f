use std::fs;
use std::path::{Path, PathBuf};

use patchforge::kv::KvMap;
use patchforge::{Error, Result};

use crate::{ConfigArgs, Global};

pub const DATA_DIR_VAR: &str = "PATCHFORGE_DATA_DIR";

/// Relative paths are taken from `PATCHFORGE_DATA_DIR` when it is set.
pub fn resolve(p: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_VAR) {
        Some(root) if p.is_relative() => Path::new(&root).join(p),
        _ => p.to_path_buf(),
    }
}

pub fn read_text(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| Error::io(p, e))
}

pub fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Config file, then `--set` overrides, then the global flags.
pub fn load_config(c: &ConfigArgs, g: &Global) -> Result<KvMap> {
    let mut m = match &c.config {
        Some(p) => KvMap::parse(&read_text(&resolve(p))?)?,
        None => KvMap::new(),
    };
    for o in &c.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{o}'")))?;
        if k.trim().is_empty() {
            return Err(Error::Config(format!("--set has an empty key in '{o}'")));
        }
        m.set(k.trim(), v.trim());
    }
    if let Some(s) = g.seed {
        m.set("seed", s);
    }
    if let Some(w) = g.workers {
        m.set("workers", w);
    }
    if g.deterministic {
        m.set("deterministic", true);
    }
    Ok(m)
}
