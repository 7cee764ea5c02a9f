use super::batching::BatchCaps;
use super::optim::{OptimConfig, OptimFamily};
use super::pipeline::PipelineConfig;
use super::schedule::ScheduleConfig;
use crate::error::{Error, Result};
use crate::evalens::Averaging;
use crate::kv::KvMap;
use crate::objectives::{NoisyNodesConfig, ViewConfig};
use crate::processors::{GnConfig, MpnnConfig};
use crate::sampler::SamplingPlan;

const MPNN_MODEL_KEYS: &[&str] = &[
    "latent", "hidden", "steps", "encoder_layers", "processor_layers", "decoder_layers", "activation", "dropout", "drop_edge", "residual",
    "bidirectional",
];
const GN_MODEL_KEYS: &[&str] = &[
    "latent", "hidden", "steps", "encoder_layers", "processor_layers", "decoder_layers", "activation", "dropout", "drop_edge", "residual",
    "position_heads", "graph_in",
];
const COMMON_KEYS: &[&str] = &[
    "steps", "eval_every", "patience", "ema_decay", "seed", "workers", "queue", "deterministic", "optim.family", "optim.beta1", "optim.beta2",
    "optim.weight_decay", "optim.eps", "optim.clip_norm", "lr.initial", "lr.peak", "lr.warmup", "lr.total", "lr.floor", "caps.nodes",
    "caps.edges", "caps.graphs",
];
const NODE_KEYS: &[&str] = &[
    "eval_patches", "eval_limit", "averaging", "bgrl_weight", "unlabelled_ratio", "target_decay", "label_features", "train_max_year",
    "valid_year", "view.feature_dropout", "view.drop_edge",
];
const MOL_KEYS: &[&str] = &[
    "conformer", "noisy", "noisy.p", "noisy.sigma", "noisy.node_weight", "noisy.edge_weight", "noisy.displacement_weight", "noisy.distance_weight",
];

/// Settings shared by both training loops.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonConfig {
    /// Optimiser steps.
    pub steps: u64,
    /// Steps between validation evaluations.
    pub eval_every: u64,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Decay of the evaluation parameter EMA.
    pub ema_decay: f64,
    pub seed: u64,
    pub pipeline: PipelineConfig,
    /// Forces a single producer worker.
    pub deterministic: bool,
    pub optim: OptimConfig,
    pub schedule: ScheduleConfig,
    pub caps: BatchCaps,
}

impl CommonConfig {
    fn defaults(optim: OptimConfig, schedule: ScheduleConfig, caps: BatchCaps) -> Self {
        CommonConfig {
            steps: schedule.total,
            eval_every: 1000,
            patience: 10,
            ema_decay: 0.9999,
            seed: 0,
            pipeline: PipelineConfig::default(),
            deterministic: false,
            optim,
            schedule,
            caps,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let mut p = self.pipeline;
        if self.deterministic {
            p.workers = 1;
        }
        p
    }

    fn read(&mut self, m: &KvMap) -> Result<()> {
        self.steps = m.get_or("steps", self.steps)?;
        self.eval_every = m.get_or("eval_every", self.eval_every)?;
        self.patience = m.get_or("patience", self.patience)?;
        self.ema_decay = m.get_or("ema_decay", self.ema_decay)?;
        self.seed = m.get_or("seed", self.seed)?;
        self.pipeline.workers = m.get_or("workers", self.pipeline.workers)?;
        self.pipeline.queue = m.get_or("queue", self.pipeline.queue)?;
        self.deterministic = m.get_or("deterministic", self.deterministic)?;
        let o = &mut self.optim;
        o.family = match m.get_str("optim.family") {
            None => o.family,
            Some("adam") => OptimFamily::Adam,
            Some("adamw") => OptimFamily::AdamW,
            Some(f) => return Err(Error::Config(format!("unknown optimiser family '{f}'"))),
        };
        o.beta1 = m.get_or("optim.beta1", o.beta1)?;
        o.beta2 = m.get_or("optim.beta2", o.beta2)?;
        o.weight_decay = m.get_or("optim.weight_decay", o.weight_decay)?;
        o.eps = m.get_or("optim.eps", o.eps)?;
        o.clip_norm = match m.get_str("optim.clip_norm") {
            None => o.clip_norm,
            Some("none") => None,
            Some(_) => Some(m.require("optim.clip_norm")?),
        };
        let s = &mut self.schedule;
        s.initial = m.get_or("lr.initial", s.initial)?;
        s.peak = m.get_or("lr.peak", s.peak)?;
        s.warmup = m.get_or("lr.warmup", s.warmup)?;
        s.total = m.get_or("lr.total", s.total)?;
        s.floor = m.get_or("lr.floor", s.floor)?;
        let c = &mut self.caps;
        c.nodes = m.get_or("caps.nodes", c.nodes)?;
        c.edges = m.get_or("caps.edges", c.edges)?;
        c.graphs = m.get_or("caps.graphs", c.graphs)?;
        self.validate()
    }

    fn write(&self, m: &mut KvMap) {
        m.set("steps", self.steps);
        m.set("eval_every", self.eval_every);
        m.set("patience", self.patience);
        m.set("ema_decay", self.ema_decay);
        m.set("seed", self.seed);
        m.set("workers", self.pipeline.workers);
        m.set("queue", self.pipeline.queue);
        m.set("deterministic", self.deterministic);
        let o = &self.optim;
        m.set("optim.family", if o.family == OptimFamily::Adam { "adam" } else { "adamw" });
        m.set("optim.beta1", o.beta1);
        m.set("optim.beta2", o.beta2);
        m.set("optim.weight_decay", o.weight_decay);
        m.set("optim.eps", o.eps);
        m.set("optim.clip_norm", o.clip_norm.map_or("none".to_string(), |c| c.to_string()));
        let s = &self.schedule;
        m.set("lr.initial", s.initial);
        m.set("lr.peak", s.peak);
        m.set("lr.warmup", s.warmup);
        m.set("lr.total", s.total);
        m.set("lr.floor", s.floor);
        m.set("caps.nodes", self.caps.nodes);
        m.set("caps.edges", self.caps.edges);
        m.set("caps.graphs", self.caps.graphs);
    }

    fn validate(&self) -> Result<()> {
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!("ema_decay must be in [0, 1), got {}", self.ema_decay)));
        }
        if self.schedule.total < self.schedule.warmup {
            return Err(Error::Config("lr.total must be >= lr.warmup".into()));
        }
        if self.caps.nodes == 0 || self.caps.edges == 0 || self.caps.graphs == 0 {
            return Err(Error::Config("batch caps must be positive".into()));
        }
        Ok(())
    }
}

/// Checks every key of `m` against the known keys of a training mode and
/// reports all unknown keys at once.
fn check_keys(m: &KvMap, mode: &[&str], model: &[&str], plan: bool) -> Result<()> {
    let unknown: Vec<&str> = m
        .keys()
        .filter(|k| {
            if let Some(rest) = k.strip_prefix("model.") {
                return !model.contains(&rest);
            }
            if plan && k.starts_with("plan.") {
                return false;
            }
            !COMMON_KEYS.contains(k) && !mode.contains(k)
        })
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))))
    }
}

fn model_section(m: &KvMap) -> KvMap {
    let mut out = KvMap::new();
    for k in m.keys() {
        if let Some(rest) = k.strip_prefix("model.") {
            out.set(rest, m.get_str(k).unwrap_or_default());
        }
    }
    out
}

fn prefixed(prefix: &str, src: &KvMap, skip: &[&str], dst: &mut KvMap) {
    for k in src.keys() {
        if !skip.contains(&k) {
            dst.set(&format!("{prefix}{k}"), src.get_str(k).unwrap_or_default());
        }
    }
}

/// Node classification with BGRL.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrainConfig {
    pub common: CommonConfig,
    /// Architecture; input widths and class count are filled from the data.
    pub model: MpnnConfig,
    pub plan: SamplingPlan,
    /// Patches averaged per validation paper.
    pub eval_patches: usize,
    /// Validation papers evaluated per interval; all when `None`.
    pub eval_limit: Option<usize>,
    pub averaging: Averaging,
    pub bgrl_weight: f64,
    /// Unlabelled patches per labelled patch in the stream; 0 means all
    /// labelled.
    pub unlabelled_ratio: usize,
    pub target_decay: f64,
    pub label_features: bool,
    /// Papers with a label and a year up to this are training papers.
    pub train_max_year: i32,
    /// Labelled papers of this year form the validation split.
    pub valid_year: i32,
    pub views: ViewConfig,
}

impl Default for NodeTrainConfig {
    fn default() -> Self {
        NodeTrainConfig {
            common: CommonConfig::defaults(OptimConfig::node_default(), ScheduleConfig::node_default(), BatchCaps::node_default()),
            model: MpnnConfig::new(0, 0, 1),
            plan: SamplingPlan::default(),
            eval_patches: 50,
            eval_limit: None,
            averaging: Averaging::Probabilities,
            bgrl_weight: 1.0,
            unlabelled_ratio: 10,
            target_decay: 0.999,
            label_features: true,
            train_max_year: 2018,
            valid_year: 2019,
            views: ViewConfig::default(),
        }
    }
}

impl NodeTrainConfig {
    /// Defaults overridden by `m`; unknown keys are an error.
    pub fn from_kv(m: &KvMap) -> Result<Self> {
        check_keys(m, NODE_KEYS, MPNN_MODEL_KEYS, true)?;
        let mut c = NodeTrainConfig::default();
        c.common.read(m)?;
        let mut mk = c.model.to_kv();
        let section = model_section(m);
        for k in section.keys() {
            mk.set(k, section.get_str(k).unwrap_or_default());
        }
        c.model = MpnnConfig::from_kv(&mk)?;
        let plan_lines: String = m
            .keys()
            .filter_map(|k| k.strip_prefix("plan.").map(|rest| format!("{rest} = {}\n", m.get_str(k).unwrap_or_default())))
            .collect();
        c.plan = SamplingPlan::parse(&(c.plan.to_text() + &plan_lines))?;
        c.eval_patches = m.get_or("eval_patches", c.eval_patches)?;
        c.eval_limit = match m.get_str("eval_limit") {
            None | Some("all") => None,
            Some(_) => Some(m.require("eval_limit")?),
        };
        c.averaging = match m.get_str("averaging") {
            None | Some("probabilities") => Averaging::Probabilities,
            Some("logits") => Averaging::Logits,
            Some(a) => return Err(Error::Config(format!("unknown averaging '{a}'"))),
        };
        c.bgrl_weight = m.get_or("bgrl_weight", c.bgrl_weight)?;
        c.unlabelled_ratio = m.get_or("unlabelled_ratio", c.unlabelled_ratio)?;
        c.target_decay = m.get_or("target_decay", c.target_decay)?;
        c.label_features = m.get_or("label_features", c.label_features)?;
        c.train_max_year = m.get_or("train_max_year", c.train_max_year)?;
        c.valid_year = m.get_or("valid_year", c.valid_year)?;
        c.views.feature_dropout = m.get_or("view.feature_dropout", c.views.feature_dropout)?;
        c.views.drop_edge = m.get_or("view.drop_edge", c.views.drop_edge)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.common.validate()?;
        if self.eval_patches == 0 {
            return Err(Error::Config("eval_patches must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.target_decay) {
            return Err(Error::Config(format!("target_decay must be in [0, 1), got {}", self.target_decay)));
        }
        if self.valid_year <= self.train_max_year {
            return Err(Error::Config("valid_year must be after train_max_year".into()));
        }
        for (k, p) in [("view.feature_dropout", self.views.feature_dropout), ("view.drop_edge", self.views.drop_edge)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{k} must be in [0, 1], got {p}")));
            }
        }
        Ok(())
    }

    /// Fully resolved settings in the config file syntax.
    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        self.common.write(&mut m);
        prefixed("model.", &self.model.to_kv(), &["mode", "node_in", "edge_in", "num_classes"], &mut m);
        for line in self.plan.to_text().lines() {
            if let Some((k, v)) = line.split_once('=') {
                m.set(&format!("plan.{}", k.trim()), v.trim());
            }
        }
        m.set("eval_patches", self.eval_patches);
        m.set("eval_limit", self.eval_limit.map_or("all".to_string(), |l| l.to_string()));
        m.set("averaging", if self.averaging == Averaging::Logits { "logits" } else { "probabilities" });
        m.set("bgrl_weight", self.bgrl_weight);
        m.set("unlabelled_ratio", self.unlabelled_ratio);
        m.set("target_decay", self.target_decay);
        m.set("label_features", self.label_features);
        m.set("train_max_year", self.train_max_year);
        m.set("valid_year", self.valid_year);
        m.set("view.feature_dropout", self.views.feature_dropout);
        m.set("view.drop_edge", self.views.drop_edge);
        m
    }
}

/// Molecular regression with optional Noisy Nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MolTrainConfig {
    pub common: CommonConfig,
    /// Architecture; input widths, vocabularies and target normalisation
    /// are filled from the data.
    pub model: GnConfig,
    /// Use conformer edge features; every molecule must carry coordinates.
    pub conformer: bool,
    pub noisy: Option<NoisyNodesConfig>,
}

impl Default for MolTrainConfig {
    fn default() -> Self {
        MolTrainConfig {
            common: CommonConfig::defaults(OptimConfig::mol_default(), ScheduleConfig::mol_default(), BatchCaps::mol_default()),
            model: GnConfig::new(0, 0, 1, 1),
            conformer: true,
            noisy: Some(NoisyNodesConfig::default()),
        }
    }
}

impl MolTrainConfig {
    pub fn from_kv(m: &KvMap) -> Result<Self> {
        check_keys(m, MOL_KEYS, GN_MODEL_KEYS, false)?;
        let mut c = MolTrainConfig::default();
        c.common.read(m)?;
        let mut mk = c.model.to_kv();
        let section = model_section(m);
        for k in section.keys() {
            mk.set(k, section.get_str(k).unwrap_or_default());
        }
        c.model = GnConfig::from_kv(&mk)?;
        c.conformer = m.get_or("conformer", c.conformer)?;
        let enabled = m.get_or("noisy", c.noisy.is_some())?;
        let mut n = c.noisy.unwrap_or_default();
        n.p = m.get_or("noisy.p", n.p)?;
        n.sigma = m.get_or("noisy.sigma", n.sigma)?;
        n.node_weight = m.get_or("noisy.node_weight", n.node_weight)?;
        n.edge_weight = m.get_or("noisy.edge_weight", n.edge_weight)?;
        n.displacement_weight = m.get_or("noisy.displacement_weight", n.displacement_weight)?;
        n.distance_weight = m.get_or("noisy.distance_weight", n.distance_weight)?;
        n.validate()?;
        c.noisy = enabled.then_some(n);
        c.common.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        self.common.write(&mut m);
        prefixed(
            "model.",
            &self.model.to_kv(),
            &["mode", "node_in", "edge_in", "atom_vocab", "bond_vocab", "target_mean", "target_std"],
            &mut m,
        );
        m.set("conformer", self.conformer);
        m.set("noisy", self.noisy.is_some());
        let n = self.noisy.unwrap_or_default();
        m.set("noisy.p", n.p);
        m.set("noisy.sigma", n.sigma);
        m.set("noisy.node_weight", n.node_weight);
        m.set("noisy.edge_weight", n.edge_weight);
        m.set("noisy.displacement_weight", n.displacement_weight);
        m.set("noisy.distance_weight", n.distance_weight);
        m
    }
}
