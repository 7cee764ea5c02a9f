use std::fs;
use std::path::Path;

use super::gn::{GnConfig, GnModel};
use super::mpnn::{MpnnConfig, MpnnModel};
use super::params::{ParamGroup, ParamStore};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::pfgm::{self, Matrix};
use crate::rng::Stream;

pub const MANIFEST: &str = "checkpoint.manifest";

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Mpnn(MpnnConfig),
    Gn(GnConfig),
}

impl ModelConfig {
    fn to_kv(&self) -> KvMap {
        match self {
            ModelConfig::Mpnn(c) => c.to_kv(),
            ModelConfig::Gn(c) => c.to_kv(),
        }
    }
}

/// Model configuration plus parameter values.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn mpnn(&self) -> Result<(MpnnModel, ParamStore<f32>)> {
        let ModelConfig::Mpnn(cfg) = &self.config else {
            return Err(Error::Config("checkpoint holds a graph network, not an mpnn".into()));
        };
        let mut store = ParamStore::new();
        let model = MpnnModel::new(cfg.clone(), &mut store, &mut Stream::root(0).rng())?;
        store.load_from(&self.params)?;
        Ok((model, store))
    }

    pub fn gn(&self) -> Result<(GnModel, ParamStore<f32>)> {
        let ModelConfig::Gn(cfg) = &self.config else {
            return Err(Error::Config("checkpoint holds an mpnn, not a graph network".into()));
        };
        let mut store = ParamStore::new();
        let model = GnModel::new(cfg.clone(), &mut store, &mut Stream::root(0).rng())?;
        store.load_from(&self.params)?;
        Ok((model, store))
    }
}

fn group_name(g: ParamGroup) -> &'static str {
    match g {
        ParamGroup::Encoder => "encoder",
        ParamGroup::Processor => "processor",
        ParamGroup::Decoder => "decoder",
        ParamGroup::Projector => "projector",
    }
}

fn parse_group(s: &str) -> Option<ParamGroup> {
    Some(match s {
        "encoder" => ParamGroup::Encoder,
        "processor" => ParamGroup::Processor,
        "decoder" => ParamGroup::Decoder,
        "projector" => ParamGroup::Projector,
        _ => return None,
    })
}

/// Writes one PFGM file per parameter and a manifest listing mode, widths and
/// parameter names. The manifest is written last, via rename.
pub fn save_checkpoint(dir: &Path, config: &ModelConfig, params: &ParamStore<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut kv = config.to_kv();
    kv.set("params", params.len());
    for id in params.ids() {
        let v = params.get(id);
        let file = format!("p{:04}.pfgm", id.index());
        kv.set(&format!("param.{:04}", id.index()), format!("{} {} {} {} {file}", params.name(id), group_name(params.group(id)), v.rows(), v.cols()));
        pfgm::write(&dir.join(&file), &Matrix::new(v.rows(), v.cols(), v.data().to_vec())?)?;
    }
    let tmp = dir.join(format!("{MANIFEST}.tmp"));
    fs::write(&tmp, kv.to_text()).map_err(|e| Error::io(&tmp, e))?;
    let path = dir.join(MANIFEST);
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let kv = KvMap::parse(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    let config = match kv.get_str("mode") {
        Some("mpnn") => ModelConfig::Mpnn(MpnnConfig::from_kv(&kv)?),
        Some("gn") => ModelConfig::Gn(GnConfig::from_kv(&kv)?),
        other => return Err(Error::format(&path, format!("unknown mode {other:?}"))),
    };
    let count: usize = kv.require("params")?;
    let mut params = ParamStore::new();
    for i in 0..count {
        let key = format!("param.{i:04}");
        let line = kv.get_str(&key).ok_or_else(|| Error::format(&path, format!("missing {key}")))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::format(&path, format!("{key}: expected 'name group rows cols file', got '{line}'"));
        if f.len() != 5 {
            return Err(bad());
        }
        let group = parse_group(f[1]).ok_or_else(bad)?;
        let rows: usize = f[2].parse().map_err(|_| bad())?;
        let cols: usize = f[3].parse().map_err(|_| bad())?;
        let m = pfgm::read(&dir.join(f[4]))?;
        if (m.rows, m.cols) != (rows, cols) {
            return Err(Error::format(dir.join(f[4]), format!("shape {}x{} but manifest says {rows}x{cols}", m.rows, m.cols)));
        }
        params.add(f[0], group, Tensor::from_vec(rows, cols, m.data)?);
    }
    Ok(Checkpoint { config, params })
}
