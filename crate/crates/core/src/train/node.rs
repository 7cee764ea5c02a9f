use std::path::Path;

use rand::Rng;

use super::batching::ItemSize;
use super::config::NodeTrainConfig;
use super::early::{EarlyStopper, StopMode};
use super::ema::ParamEma;
use super::metrics::{MetricRow, MetricsWriter};
use super::optim::{collect_grads, Optimizer};
use super::pipeline::run_pipeline;
use super::schedule::lr_at;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::evalens::{argmax, patch_logits, softmax, Averaging, NodeContext};
use crate::featurize::{featurize_patch, FeatureTables, LabelVisibility, NodeFeatureLayout, PatchFeatures, EDGE_WIDTH};
use crate::hetgraph::HeteroGraph;
use crate::objectives::{bgrl_loss, make_views, BgrlState};
use crate::processors::{save_checkpoint, Bound, GraphBatch, ModelConfig, MpnnModel, ParamStore};
use crate::rng::Stream;
use crate::sampler::{patch_stream, sample_patch};

/// Canonical labelled papers per split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSplits {
    /// Labelled, year up to `train_max_year`.
    pub train: Vec<u32>,
    /// Labelled, year equal to `valid_year`.
    pub valid: Vec<u32>,
    /// Labelled, later than `valid_year`.
    pub test: Vec<u32>,
}

pub fn node_splits(g: &HeteroGraph, train_max_year: i32, valid_year: i32) -> NodeSplits {
    let mut s = NodeSplits { train: Vec::new(), valid: Vec::new(), test: Vec::new() };
    for p in (0..g.num_papers() as u32).filter(|&p| g.is_canonical(p) && g.label(p).is_some()) {
        let y = g.year(p);
        if y <= train_max_year {
            s.train.push(p);
        } else if y == valid_year {
            s.valid.push(p);
        } else if y > valid_year {
            s.test.push(p);
        }
    }
    s
}

/// Label visibility for training patches: training labels, or none.
pub fn train_visibility(g: &HeteroGraph, splits: &NodeSplits, label_features: bool) -> LabelVisibility {
    if label_features {
        LabelVisibility::from_ids(g.num_papers(), splits.train.iter().copied())
    } else {
        LabelVisibility::none(g.num_papers())
    }
}

/// Label visibility for evaluation: training and validation labels, or
/// none. The query paper is always masked by featurisation.
pub fn eval_visibility(g: &HeteroGraph, splits: &NodeSplits, label_features: bool) -> LabelVisibility {
    if label_features {
        LabelVisibility::from_ids(g.num_papers(), splits.train.iter().chain(&splits.valid).copied())
    } else {
        LabelVisibility::none(g.num_papers())
    }
}

/// Model architecture with input widths taken from the data.
pub fn node_model_config(cfg: &NodeTrainConfig, g: &HeteroGraph, tables: &FeatureTables) -> crate::processors::MpnnConfig {
    let layout = NodeFeatureLayout { pca_dim: tables.dim(), num_classes: g.num_classes() };
    crate::processors::MpnnConfig { node_in: layout.width(), edge_in: EDGE_WIDTH, num_classes: g.num_classes(), ..cfg.model.clone() }
}

/// Whether stream position `i` carries a labelled patch.
pub fn is_labelled_slot(i: u64, unlabelled_ratio: usize) -> bool {
    i.is_multiple_of(unlabelled_ratio as u64 + 1)
}

#[derive(Debug, Clone)]
pub struct NodeItem {
    pub index: u64,
    pub center: u32,
    pub kind: NodeItemKind,
}

#[derive(Debug, Clone)]
pub enum NodeItemKind {
    Labelled { patch: PatchFeatures, label: usize },
    Unlabelled { view_a: PatchFeatures, view_b: PatchFeatures },
}

impl NodeItem {
    fn size(&self) -> ItemSize {
        let p = match &self.kind {
            NodeItemKind::Labelled { patch, .. } => patch,
            NodeItemKind::Unlabelled { view_a, .. } => view_a,
        };
        ItemSize::graph(p.nodes.rows, p.edges.rows)
    }
}

/// Sources of the patch stream.
pub struct NodeStream<'a> {
    pub graph: &'a HeteroGraph,
    pub tables: &'a FeatureTables,
    pub visible: &'a LabelVisibility,
    pub labelled: &'a [u32],
    pub unlabelled: &'a [u32],
    pub cfg: &'a NodeTrainConfig,
}

impl NodeStream<'_> {
    /// Item at stream position `i`; depends only on the seed and `i`.
    pub fn item(&self, i: u64) -> Result<NodeItem> {
        let seed = self.cfg.common.seed;
        let labelled = is_labelled_slot(i, self.cfg.unlabelled_ratio) || self.unlabelled.is_empty();
        let pool = if labelled { self.labelled } else { self.unlabelled };
        if pool.is_empty() {
            return Err(Error::input("no training papers to sample patch centers from"));
        }
        let center = pool[Stream::root(seed).named("centers").keyed(i).rng().random_range(0..pool.len())];
        let patch = sample_patch(self.graph, center, &self.cfg.plan, &mut patch_stream(seed, i, center).rng())?;
        let feats = featurize_patch(&patch, self.graph, self.tables, self.visible, self.graph.num_classes())?;
        let kind = if labelled {
            let label = self.graph.label(center).ok_or_else(|| Error::input(format!("training paper {center} has no label")))?;
            NodeItemKind::Labelled { patch: feats, label }
        } else {
            let (view_a, view_b) = make_views(&feats, &self.cfg.views, &mut Stream::root(seed).named("views").keyed(i).rng())?;
            NodeItemKind::Unlabelled { view_a, view_b }
        };
        Ok(NodeItem { index: i, center, kind })
    }
}

/// Losses and counts from one optimiser step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeStepStats {
    pub loss: f64,
    pub ce: Option<f64>,
    pub bgrl: Option<f64>,
    pub labelled: usize,
    pub correct: usize,
}

/// Trainable state of a node run.
pub struct NodeTrainer {
    pub model: MpnnModel,
    pub params: ParamStore<f32>,
    pub optim: Optimizer<f32>,
    pub target: BgrlState<f32>,
    pub ema: ParamEma<f32>,
    pub bgrl_weight: f64,
}

impl NodeTrainer {
    pub fn new(cfg: &NodeTrainConfig, model_cfg: crate::processors::MpnnConfig) -> Result<Self> {
        let mut params = ParamStore::new();
        let model = MpnnModel::new(model_cfg, &mut params, &mut Stream::root(cfg.common.seed).named("init").rng())?;
        Ok(NodeTrainer {
            optim: Optimizer::new(cfg.common.optim, &params),
            target: BgrlState::new(&params, cfg.target_decay)?,
            ema: ParamEma::new(&params, cfg.common.ema_decay),
            model,
            params,
            bgrl_weight: cfg.bgrl_weight,
        })
    }

    /// Target-network embeddings of the centrals, in evaluation mode.
    fn target_embeddings(&self, batch: &GraphBatch<f32>) -> Result<crate::autodiff::Tensor<f32>> {
        let mut tape = Tape::new();
        let bound = self.target.bind(&mut tape, self.params.len());
        let z = self.model.embed_centrals(&mut tape, &bound, batch, None)?;
        Ok(tape.value(z).clone())
    }

    /// Mean cross-entropy over labelled centrals plus the weighted BGRL
    /// loss over unlabelled centrals, then one optimiser step, one target
    /// EMA step and one parameter EMA step.
    pub fn step(&mut self, items: &[NodeItem], lr: f64, step: u64, seed: u64) -> Result<NodeStepStats> {
        if items.is_empty() {
            return Err(Error::input("batch has no labelled and no unlabelled patches"));
        }
        let mut noise = Stream::root(seed).named("dropout").keyed(step).rng();
        let mut tape = Tape::<f32>::new();
        let bound: Bound = self.params.bind(&mut tape);
        let mut stats = NodeStepStats::default();
        let mut terms: Vec<Var> = Vec::new();

        let labelled: Vec<(&PatchFeatures, usize)> = items
            .iter()
            .filter_map(|it| match &it.kind {
                NodeItemKind::Labelled { patch, label } => Some((patch, *label)),
                _ => None,
            })
            .collect();
        if !labelled.is_empty() {
            let batch = GraphBatch::<f32>::pack(&labelled.iter().map(|(p, _)| p.item()).collect::<Vec<_>>(), 1)?;
            let labels: Vec<usize> = labelled.iter().map(|(_, l)| *l).collect();
            let logits = self.model.logits(&mut tape, &bound, &batch, Some(&mut noise))?;
            let v = tape.value(logits);
            stats.labelled = labels.len();
            stats.correct = (0..v.rows())
                .filter(|&r| argmax(&v.row(r).iter().map(|&x| x as f64).collect::<Vec<_>>()) == labels[r])
                .count();
            let ce = tape.softmax_cross_entropy(logits, &labels)?;
            stats.ce = Some(tape.value(ce).item() as f64);
            terms.push(ce);
        }

        let views: Vec<(&PatchFeatures, &PatchFeatures)> = items
            .iter()
            .filter_map(|it| match &it.kind {
                NodeItemKind::Unlabelled { view_a, view_b } => Some((view_a, view_b)),
                _ => None,
            })
            .collect();
        if !views.is_empty() && self.bgrl_weight != 0.0 {
            let a = GraphBatch::<f32>::pack(&views.iter().map(|(a, _)| a.item()).collect::<Vec<_>>(), 1)?;
            let b = GraphBatch::<f32>::pack(&views.iter().map(|(_, b)| b.item()).collect::<Vec<_>>(), 1)?;
            let target = self.target_embeddings(&b)?;
            let z = self.model.embed_centrals(&mut tape, &bound, &a, Some(&mut noise))?;
            let q = self.model.project(&mut tape, &bound, z)?;
            let l = bgrl_loss(&mut tape, q, &target)?;
            stats.bgrl = Some(tape.value(l).item() as f64);
            terms.push(tape.scale(l, self.bgrl_weight as f32));
        }

        if let Some((&first, rest)) = terms.split_first() {
            let mut loss = first;
            for &t in rest {
                loss = tape.add(loss, t)?;
            }
            stats.loss = tape.value(loss).item() as f64;
            if !stats.loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at step {step} is {}", stats.loss)));
            }
            let mut grads = tape.backward(loss)?;
            let grads = collect_grads(&mut grads, &bound);
            self.optim.step(&mut self.params, &grads, lr)?;
        }
        self.target.ema_update(&self.params)?;
        self.ema.update(&self.params)?;
        Ok(stats)
    }
}

/// Mean negative log-likelihood and accuracy of patch-averaged
/// predictions for `centers`.
pub fn evaluate_nodes(
    model: &MpnnModel,
    params: &ParamStore<f32>,
    ctx: &NodeContext<'_>,
    centers: &[u32],
    n_patches: usize,
    averaging: Averaging,
    seed: u64,
) -> Result<(f64, f64)> {
    if centers.is_empty() {
        return Err(Error::input("no papers to evaluate"));
    }
    let (mut nll, mut correct) = (0.0, 0usize);
    for chunk in centers.chunks((256 / n_patches).max(1)) {
        let mut patches = Vec::with_capacity(chunk.len() * n_patches);
        for &c in chunk {
            for j in 0..n_patches {
                patches.push(ctx.patch(c, j, seed)?);
            }
        }
        let logits = patch_logits(model, params, &patches)?;
        for (k, &c) in chunk.iter().enumerate() {
            let rows = &logits[k * n_patches..(k + 1) * n_patches];
            let mean = |rows: &[Vec<f64>]| -> Vec<f64> { (0..rows[0].len()).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64).collect() };
            let probs = match averaging {
                Averaging::Probabilities => mean(&rows.iter().map(|l| softmax(l)).collect::<Vec<_>>()),
                Averaging::Logits => softmax(&mean(rows)),
            };
            let label = ctx.graph.label(c).ok_or_else(|| Error::input(format!("evaluation paper {c} has no label")))?;
            nll -= probs[label].max(1e-300).ln();
            correct += (argmax(&probs) == label) as usize;
        }
    }
    Ok((nll / centers.len() as f64, correct as f64 / centers.len() as f64))
}

/// Result of a training run.
#[derive(Debug)]
pub struct NodeRun {
    pub model: MpnnModel,
    /// EMA parameters at the best validation evaluation.
    pub best_params: ParamStore<f32>,
    pub best_step: u64,
    pub best_accuracy: f64,
    pub steps_run: u64,
    pub history: Vec<MetricRow>,
}

/// Trains the node classifier. When `out_dir` is given, metrics go to
/// `out_dir/metrics.csv` and the best EMA parameters to
/// `out_dir/checkpoint`.
pub fn train_node(cfg: &NodeTrainConfig, g: &HeteroGraph, tables: &FeatureTables, out_dir: Option<&Path>) -> Result<NodeRun> {
    let splits = node_splits(g, cfg.train_max_year, cfg.valid_year);
    train_node_on(cfg, g, tables, &splits, out_dir)
}

/// [`train_node`] with explicit splits, e.g. a k-fold member that trains on
/// the training set plus all but one validation fold.
pub fn train_node_on(cfg: &NodeTrainConfig, g: &HeteroGraph, tables: &FeatureTables, splits: &NodeSplits, out_dir: Option<&Path>) -> Result<NodeRun> {
    cfg.validate()?;
    if splits.train.is_empty() || splits.valid.is_empty() {
        return Err(Error::input(format!(
            "need training and validation papers, found {} and {}",
            splits.train.len(),
            splits.valid.len()
        )));
    }
    let train_vis = train_visibility(g, splits, cfg.label_features);
    let eval_vis = eval_visibility(g, splits, cfg.label_features);
    let train_set: std::collections::HashSet<u32> = splits.train.iter().copied().collect();
    let unlabelled: Vec<u32> = if cfg.unlabelled_ratio == 0 {
        Vec::new()
    } else {
        (0..g.num_papers() as u32).filter(|&p| g.is_canonical(p) && !train_set.contains(&p)).collect()
    };
    let stream = NodeStream { graph: g, tables, visible: &train_vis, labelled: &splits.train, unlabelled: &unlabelled, cfg };
    let ctx = NodeContext { graph: g, tables, visible: &eval_vis, plan: &cfg.plan };
    let valid: &[u32] = match cfg.eval_limit {
        Some(n) => &splits.valid[..n.min(splits.valid.len())],
        None => &splits.valid,
    };

    let mut trainer = NodeTrainer::new(cfg, node_model_config(cfg, g, tables))?;
    let mut metrics = match out_dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            Some(MetricsWriter::create(&d.join("metrics.csv"))?)
        }
        None => None,
    };
    let mut history = Vec::new();
    let mut stopper = EarlyStopper::new(StopMode::Max, cfg.common.patience);
    let mut best = (0u64, f64::NEG_INFINITY, trainer.ema.params().clone());
    let (mut step, mut window) = (0u64, Window::default());
    let seed = cfg.common.seed;

    run_pipeline(
        cfg.common.pipeline(),
        cfg.common.caps,
        |i| stream.item(i).map(|it| {
            let s = it.size();
            (it, s)
        }),
        |items| {
            if step >= cfg.common.steps {
                return Ok(false);
            }
            let lr = lr_at(step, &cfg.common.schedule);
            let s = trainer.step(&items, lr, step, seed)?;
            step += 1;
            window.add(s.loss, s.correct, s.labelled);
            if step % cfg.common.eval_every == 0 || step == cfg.common.steps {
                let train_row = MetricRow { step, split: "train".into(), loss: window.loss(), metric: window.accuracy(), lr };
                window = Window::default();
                let (nll, acc) = evaluate_nodes(&trainer.model, trainer.ema.params(), &ctx, valid, cfg.eval_patches, cfg.averaging, seed)?;
                let valid_row = MetricRow { step, split: "valid".into(), loss: nll, metric: acc, lr };
                log::info!("step {step}: train loss {:.4}, valid accuracy {acc:.4}", train_row.loss);
                for row in [train_row, valid_row] {
                    if let Some(w) = metrics.as_mut() {
                        w.write(&row)?;
                    }
                    history.push(row);
                }
                if stopper.observe(acc) {
                    best = (step, acc, trainer.ema.params().clone());
                    if let Some(d) = out_dir {
                        save_checkpoint(&d.join("checkpoint"), &ModelConfig::Mpnn(trainer.model.config().clone()), &best.2)?;
                    }
                }
                if stopper.should_stop() {
                    log::info!("early stop at step {step}; best step {}", best.0);
                    return Ok(false);
                }
            }
            Ok(step < cfg.common.steps)
        },
    )?;
    Ok(NodeRun { model: trainer.model, best_params: best.2, best_step: best.0, best_accuracy: best.1, steps_run: step, history })
}

/// Running means between evaluations.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Window {
    loss: f64,
    steps: usize,
    correct: usize,
    metric_sum: f64,
    seen: usize,
}

impl Window {
    pub(crate) fn add(&mut self, loss: f64, correct: usize, seen: usize) {
        self.loss += loss;
        self.steps += 1;
        self.correct += correct;
        self.seen += seen;
    }

    pub(crate) fn add_metric(&mut self, loss: f64, metric_sum: f64, seen: usize) {
        self.loss += loss;
        self.steps += 1;
        self.metric_sum += metric_sum;
        self.seen += seen;
    }

    pub(crate) fn loss(&self) -> f64 {
        self.loss / self.steps.max(1) as f64
    }

    pub(crate) fn accuracy(&self) -> f64 {
        self.correct as f64 / self.seen.max(1) as f64
    }

    pub(crate) fn metric(&self) -> f64 {
        self.metric_sum / self.seen.max(1) as f64
    }
}
