use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;

use super::batching::ItemSize;
use super::config::MolTrainConfig;
use super::early::{EarlyStopper, StopMode};
use super::ema::ParamEma;
use super::metrics::{MetricRow, MetricsWriter};
use super::node::Window;
use super::optim::{collect_grads, Optimizer};
use super::pipeline::run_pipeline;
use super::schedule::lr_at;
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::evalens::{argmax, clip_gap, mae, predict_gaps};
use crate::molgraph::{mol_features, MolFeatures, MolRecord, Molecule, ATOM_VOCAB, BOND_VOCAB, EDGE_WIDTH, EDGE_WIDTH_CONFORMER, NODE_WIDTH};
use crate::objectives::{corrupt_molecule, denoise_losses, DenoiseTargets, NoisyNodesConfig};
use crate::processors::{save_checkpoint, GnConfig, GnModel, GraphBatch, ModelConfig, ParamStore};
use crate::rng::Stream;

/// Input molecule for the given mode: conformer models require
/// coordinates, non-conformer models drop them.
pub fn model_input(m: &Molecule, conformer: bool, id: &str) -> Result<Molecule> {
    match (conformer, m.coords.is_some()) {
        (true, true) | (false, false) => Ok(m.clone()),
        (false, true) => Ok(Molecule { coords: None, ..m.clone() }),
        (true, false) => Err(Error::input(format!("conformer model given molecule '{id}' without coordinates"))),
    }
}

/// Model architecture with widths, vocabularies and target normalisation
/// taken from the training data.
pub fn mol_model_config(cfg: &MolTrainConfig, train: &[MolRecord]) -> Result<GnConfig> {
    let targets = train
        .iter()
        .map(|r| r.mol.target.ok_or_else(|| Error::input(format!("training molecule '{}' has no target", r.id))))
        .collect::<Result<Vec<f64>>>()?;
    if targets.is_empty() {
        return Err(Error::input("no training molecules"));
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let std = (targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt();
    let cfg = GnConfig {
        node_in: NODE_WIDTH,
        edge_in: if cfg.conformer { EDGE_WIDTH_CONFORMER } else { EDGE_WIDTH },
        atom_vocab: ATOM_VOCAB,
        bond_vocab: BOND_VOCAB,
        position_heads: cfg.model.position_heads && cfg.conformer,
        target_mean: mean,
        target_std: if std > 1e-12 { std } else { 1.0 },
        ..cfg.model.clone()
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct MolItem {
    pub features: MolFeatures,
    pub targets: Option<DenoiseTargets>,
    pub gap: f64,
}

/// Order of training molecules in `epoch`.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<u32> {
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut Stream::root(seed).named("mol-order").keyed(epoch).rng());
    order
}

/// Sources of the molecule stream: epochs of seeded shuffles, each
/// molecule corrupted with its own substream.
pub struct MolStream<'a> {
    pub train: &'a [MolRecord],
    pub cfg: &'a MolTrainConfig,
    order: Mutex<(u64, Arc<Vec<u32>>)>,
}

impl<'a> MolStream<'a> {
    pub fn new(train: &'a [MolRecord], cfg: &'a MolTrainConfig) -> Self {
        let first = Arc::new(epoch_order(train.len(), cfg.common.seed, 0));
        MolStream { train, cfg, order: Mutex::new((0, first)) }
    }

    fn order(&self, epoch: u64) -> Arc<Vec<u32>> {
        let mut cache = self.order.lock().unwrap_or_else(|e| e.into_inner());
        if cache.0 != epoch {
            *cache = (epoch, Arc::new(epoch_order(self.train.len(), self.cfg.common.seed, epoch)));
        }
        cache.1.clone()
    }

    /// Item at stream position `i`.
    pub fn item(&self, i: u64) -> Result<(MolItem, ItemSize)> {
        let n = self.train.len() as u64;
        let rec = &self.train[self.order(i / n)[(i % n) as usize] as usize];
        let mol = model_input(&rec.mol, self.cfg.conformer, &rec.id)?;
        let gap = rec.mol.target.ok_or_else(|| Error::input(format!("training molecule '{}' has no target", rec.id)))?;
        let (mol, targets) = match &self.cfg.noisy {
            Some(noisy) => {
                let (m, t) = corrupt_molecule(&mol, noisy, &mut Stream::root(self.cfg.common.seed).named("corrupt").keyed(i).rng())?;
                (m, Some(t))
            }
            None => (mol, None),
        };
        let size = ItemSize::graph(mol.num_atoms(), mol.num_bonds());
        Ok((MolItem { features: mol_features(&mol), targets, gap }, size))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MolStepStats {
    pub loss: f64,
    /// Sum of absolute gap errors over the batch.
    pub abs_error: f64,
    pub molecules: usize,
    pub denoise: Option<f64>,
}

pub struct MolTrainer {
    pub model: GnModel,
    pub params: ParamStore<f32>,
    pub optim: Optimizer<f32>,
    pub ema: ParamEma<f32>,
    pub noisy: Option<NoisyNodesConfig>,
}

impl MolTrainer {
    pub fn new(cfg: &MolTrainConfig, model_cfg: GnConfig) -> Result<Self> {
        let mut params = ParamStore::new();
        let model = GnModel::new(model_cfg, &mut params, &mut Stream::root(cfg.common.seed).named("init").rng())?;
        Ok(MolTrainer {
            optim: Optimizer::new(cfg.common.optim, &params),
            ema: ParamEma::new(&params, cfg.common.ema_decay),
            model,
            params,
            noisy: cfg.noisy,
        })
    }

    /// Gap MAE plus weighted denoising losses, one optimiser step and one
    /// parameter EMA step.
    pub fn step(&mut self, items: &[MolItem], lr: f64, step: u64, seed: u64) -> Result<MolStepStats> {
        if items.is_empty() {
            return Err(Error::input("empty molecule batch"));
        }
        let batch = GraphBatch::<f32>::pack(&items.iter().map(|m| m.features.item()).collect::<Vec<_>>(), self.model.config().graph_in)?;
        let mut noise = Stream::root(seed).named("dropout").keyed(step).rng();
        let mut tape = Tape::<f32>::new();
        let bound = self.params.bind(&mut tape);
        let heads = self.model.forward(&mut tape, &bound, &batch, Some(&mut noise))?;
        let target = Tensor::from_vec(items.len(), 1, items.iter().map(|m| m.gap as f32).collect())?;
        let abs_error = tape.value(heads.gap).data().iter().zip(target.data()).map(|(p, t)| (p - t).abs() as f64).sum();
        let mut loss = tape.mean_absolute_error(heads.gap, &target)?;
        let mut denoise = None;
        if let Some(noisy) = &self.noisy {
            let parts: Vec<DenoiseTargets> = items
                .iter()
                .map(|m| m.targets.clone().ok_or_else(|| Error::input("noisy-nodes batch item without denoising targets")))
                .collect::<Result<_>>()?;
            let dl = denoise_losses(&mut tape, &heads, &DenoiseTargets::concat(&parts))?;
            let total = dl.total(&mut tape, noisy)?;
            denoise = Some(tape.value(total).item() as f64);
            loss = tape.add(loss, total)?;
        }
        let value = tape.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("training loss at step {step} is {value}")));
        }
        let mut grads = tape.backward(loss)?;
        let grads = collect_grads(&mut grads, &bound);
        self.optim.step(&mut self.params, &grads, lr)?;
        self.ema.update(&self.params)?;
        Ok(MolStepStats { loss: value, abs_error, molecules: items.len(), denoise })
    }
}

/// Unclipped and clipped gap MAE over `records`.
pub fn evaluate_mols(model: &GnModel, params: &ParamStore<f32>, records: &[MolRecord]) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::input("no molecules to evaluate"));
    }
    let mols: Vec<&Molecule> = records.iter().map(|r| &r.mol).collect();
    let targets = records
        .iter()
        .map(|r| r.mol.target.ok_or_else(|| Error::input(format!("evaluation molecule '{}' has no target", r.id))))
        .collect::<Result<Vec<f64>>>()?;
    let raw = predict_gaps(model, params, &mols)?;
    let clipped = raw.iter().zip(records).map(|(&p, r)| clip_gap(p, &r.id)).collect::<Result<Vec<_>>>()?;
    Ok((mae(&raw, &targets), mae(&clipped, &targets)))
}

/// Fraction of atoms and of directed edges whose original type is
/// recovered by the denoising heads from molecules corrupted under `cfg`.
pub fn denoise_accuracy(model: &GnModel, params: &ParamStore<f32>, records: &[MolRecord], cfg: &NoisyNodesConfig, seed: u64) -> Result<(f64, f64)> {
    let conformer = model.config().edge_in == EDGE_WIDTH_CONFORMER;
    let (mut atoms, mut atoms_ok, mut edges, mut edges_ok) = (0usize, 0usize, 0usize, 0usize);
    for (c, chunk) in records.chunks(64).enumerate() {
        let mut feats = Vec::with_capacity(chunk.len());
        let mut targets = Vec::with_capacity(chunk.len());
        for (k, r) in chunk.iter().enumerate() {
            let m = model_input(&r.mol, conformer, &r.id)?;
            let key = (c * 64 + k) as u64;
            let (noisy, t) = corrupt_molecule(&m, cfg, &mut Stream::root(seed).named("denoise-eval").keyed(key).rng())?;
            feats.push(mol_features(&noisy));
            targets.push(t);
        }
        let batch = GraphBatch::<f32>::pack(&feats.iter().map(|f| f.item()).collect::<Vec<_>>(), model.config().graph_in)?;
        let mut tape = Tape::new();
        let bound = params.bind_frozen(&mut tape);
        let heads = model.forward(&mut tape, &bound, &batch, None)?;
        let t = DenoiseTargets::concat(&targets);
        let hits = |logits: &Tensor<f32>, labels: &[usize]| -> usize {
            (0..logits.rows()).filter(|&r| argmax(&logits.row(r).iter().map(|&x| x as f64).collect::<Vec<_>>()) == labels[r]).count()
        };
        atoms += t.atom_types.len();
        atoms_ok += hits(tape.value(heads.atoms), &t.atom_types);
        edges += t.bond_types.len();
        edges_ok += hits(tape.value(heads.bonds), &t.bond_types);
    }
    Ok((atoms_ok as f64 / atoms.max(1) as f64, edges_ok as f64 / edges.max(1) as f64))
}

#[derive(Debug)]
pub struct MolRun {
    pub model: GnModel,
    /// EMA parameters at the best validation evaluation.
    pub best_params: ParamStore<f32>,
    pub best_step: u64,
    /// Clipped validation MAE at the best evaluation.
    pub best_mae: f64,
    pub steps_run: u64,
    pub history: Vec<MetricRow>,
}

/// Trains the molecular regressor. When `out_dir` is given, metrics go to
/// `out_dir/metrics.csv` and the best EMA parameters to
/// `out_dir/checkpoint`. `stop_below` ends the run early once the clipped
/// validation MAE reaches it.
pub fn train_mol(cfg: &MolTrainConfig, train: &[MolRecord], valid: &[MolRecord], out_dir: Option<&Path>, stop_below: Option<f64>) -> Result<MolRun> {
    if valid.is_empty() {
        return Err(Error::input("no validation molecules"));
    }
    let model_cfg = mol_model_config(cfg, train)?;
    for r in train.iter().chain(valid) {
        model_input(&r.mol, cfg.conformer, &r.id)?;
    }
    let stream = MolStream::new(train, cfg);
    let mut trainer = MolTrainer::new(cfg, model_cfg)?;
    let mut metrics = match out_dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            Some(MetricsWriter::create(&d.join("metrics.csv"))?)
        }
        None => None,
    };
    let mut history = Vec::new();
    let mut stopper = EarlyStopper::new(StopMode::Min, cfg.common.patience);
    let mut best = (0u64, f64::INFINITY, trainer.ema.params().clone());
    let (mut step, mut window) = (0u64, Window::default());
    let seed = cfg.common.seed;

    run_pipeline(cfg.common.pipeline(), cfg.common.caps, |i| stream.item(i), |items| {
        if step >= cfg.common.steps {
            return Ok(false);
        }
        let lr = lr_at(step, &cfg.common.schedule);
        let s = trainer.step(&items, lr, step, seed)?;
        step += 1;
        window.add_metric(s.loss, s.abs_error, s.molecules);
        if step % cfg.common.eval_every == 0 || step == cfg.common.steps {
            let train_row = MetricRow { step, split: "train".into(), loss: window.loss(), metric: window.metric(), lr };
            window = Window::default();
            let (raw, clipped) = evaluate_mols(&trainer.model, trainer.ema.params(), valid)?;
            let valid_row = MetricRow { step, split: "valid".into(), loss: raw, metric: clipped, lr };
            log::info!("step {step}: train loss {:.4}, valid MAE {clipped:.4}", train_row.loss);
            for row in [train_row, valid_row] {
                if let Some(w) = metrics.as_mut() {
                    w.write(&row)?;
                }
                history.push(row);
            }
            if stopper.observe(clipped) {
                best = (step, clipped, trainer.ema.params().clone());
                if let Some(d) = out_dir {
                    save_checkpoint(&d.join("checkpoint"), &ModelConfig::Gn(trainer.model.config().clone()), &best.2)?;
                }
            }
            if stopper.should_stop() || stop_below.is_some_and(|t| clipped <= t) {
                return Ok(false);
            }
        }
        Ok(step < cfg.common.steps)
    })?;
    Ok(MolRun { model: trainer.model, best_params: best.2, best_step: best.0, best_mae: best.1, steps_run: step, history })
}
