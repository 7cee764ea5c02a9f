use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use patchforge::autodiff::{primitive_gradchecks, GRADCHECK_TOLERANCE};
use patchforge::evalens::{ensemble_dumps, read_predictions, write_predictions};
use patchforge::processors::model_gradchecks;
use patchforge::sampler::{bench as bench_patches, SamplingPlan};
use patchforge::{Error, Result};

use crate::data::load_graph;
use crate::manifest::RunManifest;
use crate::paths::{create_dir, read_text, resolve};
use crate::Global;

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    /// File listing one member prediction file per line; relative entries
    /// are taken from the list's directory.
    #[arg(long)]
    members: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn ensemble(a: EnsembleArgs, g: &Global) -> Result<()> {
    let list = resolve(&a.members);
    let base = list.parent().map(PathBuf::from).unwrap_or_default();
    let files: Vec<PathBuf> = read_text(&list)?
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            let p = PathBuf::from(l);
            if p.is_relative() { base.join(p) } else { p }
        })
        .collect();
    if files.is_empty() {
        return Err(Error::input(format!("{} lists no member files", list.display())));
    }
    let members = files.iter().map(|f| read_predictions(f)).collect::<Result<Vec<_>>>()?;
    let rows = ensemble_dumps(&members)?;
    let out = resolve(&a.out);
    create_dir(&out)?;
    write_predictions(&out.join("predictions.csv"), &rows)?;
    let mut man = RunManifest::start("ensemble", g.seed.unwrap_or(0), g);
    man.set("members", a.members.display());
    man.output("predictions.csv");
    man.result("members", files.len());
    man.result("rows", rows.len());
    man.finish(&out, g)
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Sampling plan file; the default plan when omitted.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    seconds: f64,
}

/// Prints `record,key,value` rows: the sampling rate, then node and edge
/// count histograms keyed by power-of-two bucket upper bounds.
pub fn bench(a: BenchArgs, g: &Global) -> Result<()> {
    if !(a.seconds.is_finite() && a.seconds > 0.0) {
        return Err(Error::input(format!("--seconds must be positive, got {}", a.seconds)));
    }
    let graph = load_graph(&a.graph)?;
    let plan = match &a.plan {
        Some(p) => SamplingPlan::parse(&read_text(&resolve(p))?)?,
        None => SamplingPlan::default(),
    };
    let r = bench_patches(&graph, &plan, Duration::from_secs_f64(a.seconds), g.seed.unwrap_or(0))?;
    println!("record,key,value");
    println!("rate,patches,{}", r.patches);
    println!("rate,seconds,{:.3}", r.elapsed.as_secs_f64());
    println!("rate,patches_per_sec,{:.1}", r.patches_per_sec());
    for (name, hist) in [("nodes", &r.node_histogram), ("edges", &r.edge_histogram)] {
        for (bucket, count) in hist {
            println!("{name},{bucket},{count}");
        }
    }
    Ok(())
}

/// Prints `family,max_rel_error,checked` per primitive and model family;
/// fails when any exceeds the tolerance.
pub fn gradcheck(g: &Global) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let mut reports = primitive_gradchecks(seed)?;
    reports.extend(model_gradchecks(seed)?);
    println!("family,max_rel_error,checked");
    let mut worst = 0.0f64;
    for (name, r) in &reports {
        println!("{name},{:e},{}", r.max_rel_error, r.checked);
        worst = worst.max(r.max_rel_error);
    }
    if worst > GRADCHECK_TOLERANCE || worst.is_nan() {
        return Err(Error::NonFinite(format!("gradcheck max relative error {worst:e} exceeds {GRADCHECK_TOLERANCE:e}")));
    }
    Ok(())
}
