use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::Args;
use patchforge::evalens::{clip_gap, mae, predict_gaps, predict_routed, write_predictions, PredictionRow};
use patchforge::molgraph::MolRecord;
use patchforge::processors::{load_checkpoint, GnModel, ParamStore};
use patchforge::train::{train_mol, MolTrainConfig};
use patchforge::{Error, Result};

use crate::data::{load_mols, read_folds};
use crate::manifest::RunManifest;
use crate::node::CONFIG_FILE;
use crate::paths::{create_dir, load_config, resolve};
use crate::{ConfigArgs, Global};

#[derive(Args, Debug)]
pub struct TrainMolArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// `folds.csv` from `kfold --data`; trains on all validation folds but `--fold`.
    #[arg(long, requires = "fold")]
    folds: Option<PathBuf>,
    #[arg(long, requires = "folds")]
    fold: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// Moves validation records outside `fold` into the training set.
fn fold_records(mut train: Vec<MolRecord>, valid: Vec<MolRecord>, folds: &Path, fold: usize) -> Result<(Vec<MolRecord>, Vec<MolRecord>)> {
    let (held, rest) = read_folds(folds, fold)?;
    let known: HashSet<&str> = valid.iter().map(|r| r.id.as_str()).collect();
    if let Some(bad) = held.iter().chain(&rest).find(|i| !known.contains(i.as_str())) {
        return Err(Error::input(format!("fold file lists '{bad}', which is not a validation molecule")));
    }
    let held: HashSet<String> = held.into_iter().collect();
    let (keep, moved): (Vec<MolRecord>, Vec<MolRecord>) = valid.into_iter().partition(|r| held.contains(&r.id));
    train.extend(moved);
    Ok((train, keep))
}

pub fn train(a: TrainMolArgs, g: &Global) -> Result<()> {
    let kv = load_config(&a.config, g)?;
    let cfg = MolTrainConfig::from_kv(&kv)?;
    let (mut train, mut valid) = (load_mols(&a.train)?, load_mols(&a.valid)?);
    if let (Some(f), Some(i)) = (&a.folds, a.fold) {
        (train, valid) = fold_records(train, valid, f, i)?;
    }
    let mut skipped = 0;
    if cfg.conformer {
        let before = train.len() + valid.len();
        train.retain(|r| r.mol.coords.is_some());
        valid.retain(|r| r.mol.coords.is_some());
        skipped = before - train.len() - valid.len();
        if skipped > 0 {
            log::warn!("conformer model: skipping {skipped} molecules without coordinates");
        }
    }
    let out = resolve(&a.out);
    create_dir(&out)?;
    let resolved = cfg.to_kv();
    let cfg_path = out.join(CONFIG_FILE);
    std::fs::write(&cfg_path, resolved.to_text()).map_err(|e| Error::io(&cfg_path, e))?;

    let mut man = RunManifest::start("train-mol", cfg.common.seed, g).config(resolved);
    man.set("train", a.train.display());
    man.set("valid", a.valid.display());
    if let (Some(f), Some(i)) = (&a.folds, a.fold) {
        man.set("folds", f.display());
        man.set("fold", i);
    }
    let run = train_mol(&cfg, &train, &valid, Some(&out), None)?;
    for o in [CONFIG_FILE, "metrics.csv", "checkpoint"] {
        man.output(o);
    }
    man.result("best_step", run.best_step);
    man.result("best_mae", run.best_mae);
    man.result("steps_run", run.steps_run);
    man.result("skipped_without_coords", skipped);
    println!("best validation MAE {:.4} at step {}", run.best_mae, run.best_step);
    man.finish(&out, g)
}

#[derive(Args, Debug)]
pub struct EvalMolArgs {
    /// Output directory of `train-mol`.
    #[arg(long)]
    run: PathBuf,
    /// Run used for molecules without coordinates.
    #[arg(long)]
    fallback: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn load_gn(run: &Path) -> Result<(GnModel, ParamStore<f32>)> {
    load_checkpoint(&resolve(run).join("checkpoint"))?.gn()
}

pub fn eval(a: EvalMolArgs, g: &Global) -> Result<()> {
    let records = load_mols(&a.data)?;
    if records.is_empty() {
        return Err(Error::input("no molecules to evaluate"));
    }
    let primary = load_gn(&a.run)?;
    let raw = match &a.fallback {
        Some(f) => {
            let fallback = load_gn(f)?;
            predict_routed((&primary.0, &primary.1), (&fallback.0, &fallback.1), &records)?
        }
        None => predict_gaps(&primary.0, &primary.1, &records.iter().map(|r| &r.mol).collect::<Vec<_>>())?,
    };
    let clipped = raw.iter().zip(&records).map(|(&p, r)| clip_gap(p, &r.id)).collect::<Result<Vec<_>>>()?;
    let rows = |v: &[f64]| -> Vec<PredictionRow> {
        records.iter().zip(v).map(|(r, &p)| PredictionRow { id: r.id.clone(), prediction: p, probs: vec![] }).collect()
    };
    let out = resolve(&a.out);
    create_dir(&out)?;
    write_predictions(&out.join("predictions.csv"), &rows(&clipped))?;
    write_predictions(&out.join("raw_predictions.csv"), &rows(&raw))?;

    let mut man = RunManifest::start("eval-mol", g.seed.unwrap_or(0), g);
    man.set("run", a.run.display());
    if let Some(f) = &a.fallback {
        man.set("fallback", f.display());
    }
    man.set("data", a.data.display());
    man.output("predictions.csv");
    man.output("raw_predictions.csv");
    man.result("molecules", records.len());
    let targets: Option<Vec<f64>> = records.iter().map(|r| r.mol.target).collect();
    if let Some(t) = targets {
        let m = mae(&clipped, &t);
        println!("MAE {m:.4} over {} molecules", t.len());
        man.result("mae", m);
    }
    man.finish(&out, g)
}
