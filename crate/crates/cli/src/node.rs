use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use patchforge::evalens::{argmax, predict_node_averaged, write_predictions, Averaging, NodeContext, PredictionRow};
use patchforge::featurize::FeatureTables;
use patchforge::hetgraph::HeteroGraph;
use patchforge::kv::KvMap;
use patchforge::processors::load_checkpoint;
use patchforge::train::{eval_visibility, node_splits, train_node_on, NodeSplits, NodeTrainConfig};
use patchforge::{Error, Result};
use rayon::prelude::*;

use crate::data::{load_graph, load_pca, read_folds};
use crate::manifest::RunManifest;
use crate::paths::{create_dir, read_text, resolve};
use crate::{ConfigArgs, Global};

pub const CONFIG_FILE: &str = "config.txt";

#[derive(Args, Debug)]
pub struct TrainNodeArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Directory written by `fit-pca`.
    #[arg(long)]
    pca: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// `folds.csv` from `kfold`; trains on all validation folds but `--fold`.
    #[arg(long, requires = "fold")]
    folds: Option<PathBuf>,
    #[arg(long, requires = "folds")]
    fold: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// Moves every validation paper outside `fold` into the training split.
fn fold_splits(mut s: NodeSplits, folds: &Path, fold: usize) -> Result<NodeSplits> {
    let (held, rest) = read_folds(folds, fold)?;
    let parse = |ids: Vec<String>| -> Result<Vec<u32>> {
        ids.iter().map(|i| i.parse::<u32>().map_err(|_| Error::input(format!("fold file lists non-paper id '{i}'")))).collect()
    };
    let (held, rest) = (parse(held)?, parse(rest)?);
    let valid: HashSet<u32> = s.valid.iter().copied().collect();
    if let Some(bad) = held.iter().chain(&rest).find(|i| !valid.contains(i)) {
        return Err(Error::input(format!("fold file lists paper {bad}, which is not a validation paper")));
    }
    s.train.extend(rest);
    s.valid = held;
    Ok(s)
}

fn tables(graph: &HeteroGraph, pca: &Path) -> Result<FeatureTables> {
    FeatureTables::build(graph, &load_pca(pca)?)
}

pub fn train(a: TrainNodeArgs, g: &Global) -> Result<()> {
    let kv = crate::paths::load_config(&a.config, g)?;
    let cfg = NodeTrainConfig::from_kv(&kv)?;
    let graph = load_graph(&a.graph)?;
    let tables = tables(&graph, &a.pca)?;
    let mut splits = node_splits(&graph, cfg.train_max_year, cfg.valid_year);
    if let (Some(f), Some(i)) = (&a.folds, a.fold) {
        splits = fold_splits(splits, f, i)?;
    }
    let out = resolve(&a.out);
    create_dir(&out)?;
    let resolved = cfg.to_kv();
    let cfg_path = out.join(CONFIG_FILE);
    std::fs::write(&cfg_path, resolved.to_text()).map_err(|e| Error::io(&cfg_path, e))?;

    let mut man = RunManifest::start("train-node", cfg.common.seed, g).config(resolved);
    man.set("graph", a.graph.display());
    man.set("pca", a.pca.display());
    if let (Some(f), Some(i)) = (&a.folds, a.fold) {
        man.set("folds", f.display());
        man.set("fold", i);
    }
    let run = train_node_on(&cfg, &graph, &tables, &splits, Some(&out))?;
    for o in [CONFIG_FILE, "metrics.csv", "checkpoint"] {
        man.output(o);
    }
    man.result("best_step", run.best_step);
    man.result("best_accuracy", run.best_accuracy);
    man.result("steps_run", run.steps_run);
    println!("best validation accuracy {:.4} at step {}", run.best_accuracy, run.best_step);
    man.finish(&out, g)
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Valid,
    Test,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AveragingArg {
    Probabilities,
    Logits,
}

#[derive(Args, Debug)]
pub struct EvalNodeArgs {
    /// Output directory of `train-node`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    pca: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Valid)]
    split: Split,
    /// Restrict to the held-out fold of a `folds.csv`.
    #[arg(long, requires = "fold")]
    folds: Option<PathBuf>,
    #[arg(long, requires = "folds")]
    fold: Option<usize>,
    /// Patches averaged per paper; defaults to the run's `eval_patches`.
    #[arg(long)]
    patches: Option<usize>,
    #[arg(long, value_enum)]
    averaging: Option<AveragingArg>,
    /// Evaluate only the first N papers of the split.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

pub fn eval(a: EvalNodeArgs, g: &Global) -> Result<()> {
    let run_dir = resolve(&a.run);
    let cfg = NodeTrainConfig::from_kv(&KvMap::parse(&read_text(&run_dir.join(CONFIG_FILE))?)?)?;
    let (model, params) = load_checkpoint(&run_dir.join("checkpoint"))?.mpnn()?;
    let graph = load_graph(&a.graph)?;
    let tables = tables(&graph, &a.pca)?;
    let mut splits = node_splits(&graph, cfg.train_max_year, cfg.valid_year);
    if let (Some(f), Some(i)) = (&a.folds, a.fold) {
        splits = fold_splits(splits, f, i)?;
    }
    let visible = eval_visibility(&graph, &splits, cfg.label_features);
    let ctx = NodeContext { graph: &graph, tables: &tables, visible: &visible, plan: &cfg.plan };
    let mut papers = match a.split {
        Split::Valid => splits.valid.clone(),
        Split::Test => splits.test.clone(),
    };
    if let Some(n) = a.limit {
        papers.truncate(n);
    }
    if papers.is_empty() {
        return Err(Error::input("no papers in the requested split"));
    }
    let n_patches = a.patches.unwrap_or(cfg.eval_patches);
    let averaging = match a.averaging {
        None => cfg.averaging,
        Some(AveragingArg::Probabilities) => Averaging::Probabilities,
        Some(AveragingArg::Logits) => Averaging::Logits,
    };
    let seed = g.seed.unwrap_or(cfg.common.seed);
    let workers = if g.deterministic { 1 } else { g.workers.unwrap_or(cfg.common.pipeline.workers).max(1) };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let probs = pool.install(|| {
        papers.par_iter().map(|&p| predict_node_averaged(&model, &params, &ctx, p, n_patches, seed, averaging)).collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<PredictionRow> =
        papers.iter().zip(probs).map(|(&p, probs)| PredictionRow { id: p.to_string(), prediction: argmax(&probs) as f64, probs }).collect();
    let labelled: Vec<(usize, usize)> = papers.iter().zip(&rows).filter_map(|(&p, r)| graph.label(p).map(|l| (l, r.prediction as usize))).collect();

    let out = resolve(&a.out);
    create_dir(&out)?;
    write_predictions(&out.join("predictions.csv"), &rows)?;
    let mut man = RunManifest::start("eval-node", seed, g);
    man.set("run", a.run.display());
    man.set("graph", a.graph.display());
    man.set("pca", a.pca.display());
    man.set("split", format!("{:?}", a.split).to_lowercase());
    man.set("patches", n_patches);
    man.set("averaging", if averaging == Averaging::Logits { "logits" } else { "probabilities" });
    man.output("predictions.csv");
    man.result("papers", rows.len());
    if !labelled.is_empty() {
        let acc = labelled.iter().filter(|(l, p)| l == p).count() as f64 / labelled.len() as f64;
        println!("accuracy {acc:.4} over {} labelled papers", labelled.len());
        man.result("accuracy", acc);
    }
    man.finish(&out, g)
}
