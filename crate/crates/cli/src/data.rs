use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args};
use patchforge::evalens::kfold_split;
use patchforge::featurize::fit_pca as fit;
use patchforge::featurize::PcaModel;
use patchforge::hetgraph::{load_dir, synth_mag as synth_graph, write_dir, HeteroGraph, SynthMagConfig};
use patchforge::molgraph::{read_dataset, synth_mol_dataset, write_dataset, MolRecord, SynthMolConfig};
use patchforge::rng::Stream;
use patchforge::train::node_splits;
use patchforge::{Error, Result};
use rand::seq::SliceRandom;

use crate::manifest::RunManifest;
use crate::paths::{create_dir, read_text, resolve};
use crate::Global;

pub const FOLDS_FILE: &str = "folds.csv";

#[derive(Args, Debug)]
pub struct SynthMagArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    papers: usize,
    #[arg(long, default_value_t = 300)]
    authors: usize,
    #[arg(long, default_value_t = 20)]
    institutions: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 32)]
    feature_dim: usize,
    /// Probability that an edge stays inside its community.
    #[arg(long, default_value_t = 0.9)]
    p_in: f64,
    #[arg(long, default_value_t = 0.5)]
    labelled_fraction: f64,
    /// Distance scale between class feature centroids.
    #[arg(long, default_value_t = 1.0)]
    centroid_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_std: f64,
    /// Papers overwritten with copies of other papers' features.
    #[arg(long, default_value_t = 0)]
    duplicates: usize,
}

pub fn synth_mag(a: SynthMagArgs, g: &Global) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let cfg = SynthMagConfig {
        num_papers: a.papers,
        num_authors: a.authors,
        num_institutions: a.institutions,
        num_classes: a.classes,
        feature_dim: a.feature_dim,
        p_in: a.p_in,
        labelled_fraction: a.labelled_fraction,
        centroid_scale: a.centroid_scale,
        noise_std: a.noise_std,
        duplicates: a.duplicates,
        ..SynthMagConfig::default()
    };
    let mut man = RunManifest::start("synth-mag", seed, g);
    for (k, v) in [
        ("papers", a.papers.to_string()),
        ("authors", a.authors.to_string()),
        ("institutions", a.institutions.to_string()),
        ("classes", a.classes.to_string()),
        ("feature_dim", a.feature_dim.to_string()),
        ("p_in", a.p_in.to_string()),
        ("labelled_fraction", a.labelled_fraction.to_string()),
        ("centroid_scale", a.centroid_scale.to_string()),
        ("noise_std", a.noise_std.to_string()),
        ("duplicates", a.duplicates.to_string()),
    ] {
        man.set(k, v);
    }
    let graph = synth_graph(&cfg, seed)?;
    let out = resolve(&a.out);
    write_dir(&graph, &out)?;
    man.output(".");
    man.result("papers", graph.num_papers());
    man.finish(&out, g)
}

#[derive(Args, Debug)]
pub struct SynthMolArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    count: usize,
    #[arg(long, default_value_t = 4)]
    min_atoms: usize,
    #[arg(long, default_value_t = 20)]
    max_atoms: usize,
    /// Fraction of molecules that carry coordinates.
    #[arg(long, default_value_t = 1.0)]
    conformer_fraction: f64,
    #[arg(long, default_value_t = 3)]
    max_rings: usize,
    /// Fraction of molecules written to valid.tsv.
    #[arg(long, default_value_t = 0.1)]
    valid_fraction: f64,
}

pub fn synth_mol(a: SynthMolArgs, g: &Global) -> Result<()> {
    if !(0.0..1.0).contains(&a.valid_fraction) {
        return Err(Error::input(format!("--valid-fraction must be in [0, 1), got {}", a.valid_fraction)));
    }
    let seed = g.seed.unwrap_or(0);
    let cfg = SynthMolConfig {
        count: a.count,
        min_atoms: a.min_atoms,
        max_atoms: a.max_atoms,
        conformer_fraction: a.conformer_fraction,
        max_rings: a.max_rings,
    };
    let mols = synth_mol_dataset(&cfg, seed)?;
    let mut records: Vec<MolRecord> = mols.into_iter().enumerate().map(|(i, mol)| MolRecord { id: format!("m{i}"), mol }).collect();
    records.shuffle(&mut Stream::root(seed).named("mol-split").rng());
    let n_valid = ((records.len() as f64) * a.valid_fraction).round() as usize;
    let train = records.split_off(n_valid);
    let valid = records;
    let out = resolve(&a.out);
    create_dir(&out)?;
    write_dataset(&out.join("train.tsv"), &train)?;
    write_dataset(&out.join("valid.tsv"), &valid)?;
    let mut man = RunManifest::start("synth-mol", seed, g);
    for (k, v) in [
        ("count", a.count.to_string()),
        ("min_atoms", a.min_atoms.to_string()),
        ("max_atoms", a.max_atoms.to_string()),
        ("conformer_fraction", a.conformer_fraction.to_string()),
        ("max_rings", a.max_rings.to_string()),
        ("valid_fraction", a.valid_fraction.to_string()),
    ] {
        man.set(k, v);
    }
    man.output("train.tsv");
    man.output("valid.tsv");
    man.result("train", train.len());
    man.result("valid", valid.len());
    man.finish(&out, g)
}

#[derive(Args, Debug)]
pub struct FitPcaArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Output dimension.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
}

pub fn fit_pca(a: FitPcaArgs, g: &Global) -> Result<()> {
    let graph = load_graph(&a.graph)?;
    let pca = fit(graph.features(), a.dim)?;
    let out = resolve(&a.out);
    pca.save(&out)?;
    let mut man = RunManifest::start("fit-pca", g.seed.unwrap_or(0), g);
    man.set("graph", a.graph.display());
    man.set("dim", a.dim);
    man.output("pca.manifest");
    man.finish(&out, g)
}

pub fn load_graph(p: &Path) -> Result<HeteroGraph> {
    load_dir(&resolve(p))
}

pub fn load_pca(p: &Path) -> Result<PcaModel> {
    PcaModel::load(&resolve(p))
}

pub fn load_mols(p: &Path) -> Result<Vec<MolRecord>> {
    read_dataset(&resolve(p))
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["graph", "data"])))]
pub struct KfoldArgs {
    /// Graph whose validation papers are split.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Molecule file whose records are split.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 2018)]
    train_max_year: i32,
    #[arg(long, default_value_t = 2019)]
    valid_year: i32,
    #[arg(long)]
    out: PathBuf,
}

pub fn kfold(a: KfoldArgs, g: &Global) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let names: Vec<String> = match (&a.graph, &a.data) {
        (Some(p), _) => {
            let graph = load_graph(p)?;
            node_splits(&graph, a.train_max_year, a.valid_year).valid.iter().map(|id| id.to_string()).collect()
        }
        (None, Some(p)) => load_mols(p)?.into_iter().map(|r| r.id).collect(),
        (None, None) => unreachable!("clap requires a source"),
    };
    let idx: Vec<u32> = (0..names.len() as u32).collect();
    let folds = kfold_split(&idx, a.k, seed)?;
    let mut text = String::from("id,fold\n");
    for (&i, f) in folds.ids.iter().zip(&folds.folds) {
        writeln!(text, "{},{f}", names[i as usize]).expect("string write");
    }
    let out = resolve(&a.out);
    create_dir(&out)?;
    let path = out.join(FOLDS_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    let mut man = RunManifest::start("kfold", seed, g);
    man.set("k", a.k);
    if let Some(p) = &a.graph {
        man.set("graph", p.display());
        man.set("train_max_year", a.train_max_year);
        man.set("valid_year", a.valid_year);
    }
    if let Some(p) = &a.data {
        man.set("data", p.display());
    }
    man.output(FOLDS_FILE);
    man.finish(&out, g)
}

/// Reads `id,fold` rows and returns (held-out ids, other ids) for `fold`.
pub fn read_folds(p: &Path, fold: usize) -> Result<(Vec<String>, Vec<String>)> {
    let path = resolve(p);
    let text = read_text(&path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("id,fold") {
        return Err(Error::format(&path, "expected header 'id,fold'"));
    }
    let (mut held, mut rest) = (Vec::new(), Vec::new());
    let mut max_fold = 0;
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (id, f) = line.rsplit_once(',').ok_or_else(|| Error::format(&path, format!("line {}: expected 'id,fold'", n + 2)))?;
        let f: usize = f.trim().parse().map_err(|_| Error::format(&path, format!("line {}: bad fold index '{f}'", n + 2)))?;
        max_fold = max_fold.max(f);
        if f == fold { &mut held } else { &mut rest }.push(id.trim().to_string());
    }
    if fold > max_fold {
        return Err(Error::input(format!("fold {fold} not in {} (folds 0..={max_fold})", path.display())));
    }
    Ok((held, rest))
}
