//! Evaluation: multi-patch prediction averaging, gap clipping, conformer
//! fallback routing, k-fold splits and ensemble aggregation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::featurize::{featurize_patch, FeatureTables, LabelVisibility, PatchFeatures};
use crate::hetgraph::HeteroGraph;
use crate::molgraph::{mol_features, MolRecord, Molecule};
use crate::processors::{GnModel, GraphBatch, MpnnModel, ParamStore};
use crate::rng::Stream;
use crate::sampler::{sample_patch, SamplingPlan};

pub const GAP_MIN: f64 = 0.0;
pub const GAP_MAX: f64 = 20.0;

/// What is averaged across patches before renormalisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Probabilities,
    /// Mean logits, then softmax.
    Logits,
}

/// Everything needed to build evaluation patches.
#[derive(Debug, Clone, Copy)]
pub struct NodeContext<'a> {
    pub graph: &'a HeteroGraph,
    pub tables: &'a FeatureTables,
    pub visible: &'a LabelVisibility,
    pub plan: &'a SamplingPlan,
}

impl NodeContext<'_> {
    /// Patch `j` of the evaluation sequence for `center`.
    pub fn patch(&self, center: u32, j: usize, seed: u64) -> Result<PatchFeatures> {
        let mut rng = Stream::root(seed).named("eval-patch").keyed(center as u64).keyed(j as u64).rng();
        let p = sample_patch(self.graph, self.graph.canonical(center), self.plan, &mut rng)?;
        featurize_patch(&p, self.graph, self.tables, self.visible, self.graph.num_classes())
    }
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Logits of the central node for each patch, batched.
pub fn patch_logits(model: &MpnnModel, params: &ParamStore<f32>, patches: &[PatchFeatures]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(patches.len());
    for chunk in patches.chunks(64) {
        let items: Vec<_> = chunk.iter().map(PatchFeatures::item).collect();
        let batch = GraphBatch::<f32>::pack(&items, 1)?;
        let mut tape = Tape::new();
        let b = params.bind_frozen(&mut tape);
        let l = model.logits(&mut tape, &b, &batch, None)?;
        let v = tape.value(l);
        out.extend((0..v.rows()).map(|r| v.row(r).iter().map(|&x| x as f64).collect()));
    }
    Ok(out)
}

/// Per-patch class probabilities for `n_patches` subsampled patches.
pub fn per_patch_probabilities(model: &MpnnModel, params: &ParamStore<f32>, ctx: &NodeContext<'_>, center: u32, n_patches: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let patches = (0..n_patches).map(|j| ctx.patch(center, j, seed)).collect::<Result<Vec<_>>>()?;
    Ok(patch_logits(model, params, &patches)?.iter().map(|l| softmax(l)).collect())
}

/// Mean of per-patch predictions for one central paper.
pub fn predict_node_averaged(
    model: &MpnnModel,
    params: &ParamStore<f32>,
    ctx: &NodeContext<'_>,
    center: u32,
    n_patches: usize,
    seed: u64,
    averaging: Averaging,
) -> Result<Vec<f64>> {
    if n_patches == 0 {
        return Err(Error::input("n_patches must be >= 1"));
    }
    let patches = (0..n_patches).map(|j| ctx.patch(center, j, seed)).collect::<Result<Vec<_>>>()?;
    let logits = patch_logits(model, params, &patches)?;
    let mean = |rows: &[Vec<f64>]| -> Vec<f64> { (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64).collect() };
    Ok(match averaging {
        Averaging::Probabilities => mean(&logits.iter().map(|l| softmax(l)).collect::<Vec<_>>()),
        Averaging::Logits => softmax(&mean(&logits)),
    })
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Clamps a predicted gap into `[0, 20]`; NaN is an error naming the
/// molecule.
pub fn clip_gap(x: f64, id: &str) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Eval(format!("prediction for molecule '{id}' is NaN")));
    }
    Ok(x.clamp(GAP_MIN, GAP_MAX))
}

/// Unclipped gap predictions, batched. Coordinates are dropped when the
/// model was built without conformer features.
pub fn predict_gaps(model: &GnModel, params: &ParamStore<f32>, mols: &[&Molecule]) -> Result<Vec<f64>> {
    let conformer = model.config().edge_in == crate::molgraph::EDGE_WIDTH_CONFORMER;
    let feats = mols
        .iter()
        .map(|m| match (&m.coords, conformer) {
            (Some(_), true) | (None, false) => Ok(mol_features(m)),
            (Some(_), false) => Ok(mol_features(&Molecule { coords: None, ..(*m).clone() })),
            (None, true) => Err(Error::input("conformer model given a molecule without coordinates")),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(mols.len());
    for chunk in feats.chunks(64) {
        let items: Vec<_> = chunk.iter().map(|f| f.item()).collect();
        let batch = GraphBatch::<f32>::pack(&items, model.config().graph_in)?;
        let mut tape = Tape::new();
        let b = params.bind_frozen(&mut tape);
        let s = model.process(&mut tape, &b, &batch, None)?;
        let heads = model.decode(&mut tape, &b, s)?;
        out.extend(tape.value(heads.gap).data().iter().map(|&v| v as f64));
    }
    Ok(out)
}

/// Routes molecules with coordinates to the conformer model and the rest
/// to the fallback model, then clips.
pub fn predict_with_fallback(
    conformer: (&GnModel, &ParamStore<f32>),
    fallback: (&GnModel, &ParamStore<f32>),
    records: &[MolRecord],
) -> Result<Vec<f64>> {
    let raw = predict_routed(conformer, fallback, records)?;
    records.iter().zip(raw).map(|(r, p)| clip_gap(p, &r.id)).collect()
}

/// Unclipped predictions of [`predict_with_fallback`].
pub fn predict_routed(
    conformer: (&GnModel, &ParamStore<f32>),
    fallback: (&GnModel, &ParamStore<f32>),
    records: &[MolRecord],
) -> Result<Vec<f64>> {
    let (with, without): (Vec<usize>, Vec<usize>) = (0..records.len()).partition(|&i| records[i].mol.coords.is_some());
    let mut out = vec![f64::NAN; records.len()];
    for (idx, (model, params)) in [(with, conformer), (without, fallback)] {
        let mols: Vec<&Molecule> = idx.iter().map(|&i| &records[i].mol).collect();
        for (&i, p) in idx.iter().zip(predict_gaps(model, params, &mols)?) {
            out[i] = p;
        }
    }
    Ok(out)
}

/// Fold index per validation id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub ids: Vec<u32>,
    pub folds: Vec<usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&x| x == id).map(|i| self.folds[i])
    }

    pub fn members(&self, fold: usize) -> Vec<u32> {
        self.ids.iter().zip(&self.folds).filter(|(_, &f)| f == fold).map(|(&i, _)| i).collect()
    }

    /// Ids outside `fold`, i.e. the validation data a fold's model trains on.
    pub fn complement(&self, fold: usize) -> Vec<u32> {
        self.ids.iter().zip(&self.folds).filter(|(_, &f)| f != fold).map(|(&i, _)| i).collect()
    }
}

/// Random permutation, then contiguous chunks whose sizes differ by at most
/// one (the first `n mod k` folds get the extra item).
pub fn kfold_split(ids: &[u32], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::input(format!("k must be >= 2, got {k}")));
    }
    if k > ids.len() {
        return Err(Error::input(format!("k = {k} exceeds {} ids", ids.len())));
    }
    let mut perm = ids.to_vec();
    perm.shuffle(&mut Stream::root(seed).named("kfold").rng());
    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut folds = Vec::with_capacity(ids.len());
    for f in 0..k {
        folds.extend(std::iter::repeat_n(f, base + usize::from(f < extra)));
    }
    Ok(FoldAssignment { k, ids: perm, folds })
}

/// Members as (fold, seed index) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleSpec {
    pub members: Vec<(usize, u64)>,
}

impl EnsembleSpec {
    pub fn new(k: usize, seeds_per_fold: u64) -> Self {
        EnsembleSpec { members: (0..k).flat_map(|f| (0..seeds_per_fold).map(move |s| (f, s))).collect() }
    }
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec::new(10, 2)
    }
}

/// Elementwise mean of member probability vectors.
pub fn ensemble_probabilities(members: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
    let first = members.first().ok_or_else(|| Error::input("ensemble needs at least one member"))?;
    for (m, p) in members.iter().enumerate() {
        if p.len() != first.len() || p.iter().zip(first).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::input(format!("member {m} has a different prediction shape")));
        }
    }
    let n = members.len() as f64;
    Ok((0..first.len()).map(|i| (0..first[i].len()).map(|c| members.iter().map(|m| m[i][c]).sum::<f64>() / n).collect()).collect())
}

/// Mean of member scalar predictions (clip afterwards).
pub fn ensemble_regression(members: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = members.first().ok_or_else(|| Error::input("ensemble needs at least one member"))?;
    if let Some(m) = members.iter().position(|p| p.len() != first.len()) {
        return Err(Error::input(format!("member {m} has {} predictions, expected {}", members[m].len(), first.len())));
    }
    let n = members.len() as f64;
    Ok((0..first.len()).map(|i| members.iter().map(|m| m[i]).sum::<f64>() / n).collect())
}

/// One row of a prediction dump. `probs` is empty for regression.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id: String,
    pub prediction: f64,
    pub probs: Vec<f64>,
}

/// Writes `id,prediction[,prob_0..prob_C]` with a header line.
pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let c = rows.first().map_or(0, |r| r.probs.len());
    let mut out = String::from("id,prediction");
    for i in 0..c {
        write!(out, ",prob_{i}").expect("string write");
    }
    out.push('\n');
    for r in rows {
        if r.probs.len() != c {
            return Err(Error::input(format!("row '{}' has {} probabilities, expected {c}", r.id, r.probs.len())));
        }
        if r.id.contains([',', '\n']) {
            return Err(Error::input(format!("id '{}' contains a comma or newline", r.id)));
        }
        write!(out, "{},{}", r.id, r.prediction).expect("string write");
        for p in &r.probs {
            write!(out, ",{p}").expect("string write");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format(path, "empty prediction file"))?;
    let cols = header.split(',').count();
    if !header.starts_with("id,prediction") {
        return Err(Error::format(path, "header must start with 'id,prediction'"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::format(path, format!("line {}: malformed row '{line}'", i + 2));
            if f.len() != cols {
                return Err(bad());
            }
            let nums = f[1..].iter().map(|s| s.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| bad())?;
            Ok(PredictionRow { id: f[0].to_string(), prediction: nums[0], probs: nums[1..].to_vec() })
        })
        .collect()
}

/// Aggregates member dumps with identical id order. Classification dumps
/// average probabilities and re-take the argmax; regression dumps average
/// and clip.
pub fn ensemble_dumps(members: &[Vec<PredictionRow>]) -> Result<Vec<PredictionRow>> {
    let first = members.first().ok_or_else(|| Error::input("ensemble needs at least one member"))?;
    for (m, rows) in members.iter().enumerate() {
        if rows.len() != first.len() || rows.iter().zip(first).any(|(a, b)| a.id != b.id) {
            return Err(Error::input(format!("member {m} lists different ids")));
        }
    }
    let classification = first.first().is_some_and(|r| !r.probs.is_empty());
    if classification {
        let probs: Vec<Vec<Vec<f64>>> = members.iter().map(|rows| rows.iter().map(|r| r.probs.clone()).collect()).collect();
        let mean = ensemble_probabilities(&probs)?;
        Ok(first.iter().zip(mean).map(|(r, p)| PredictionRow { id: r.id.clone(), prediction: argmax(&p) as f64, probs: p }).collect())
    } else {
        let preds: Vec<Vec<f64>> = members.iter().map(|rows| rows.iter().map(|r| r.prediction).collect()).collect();
        let mean = ensemble_regression(&preds)?;
        first.iter().zip(mean).map(|(r, p)| Ok(PredictionRow { id: r.id.clone(), prediction: clip_gap(p, &r.id)?, probs: vec![] })).collect()
    }
}

/// Mean absolute error of clipped predictions.
pub fn mae(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len().max(1) as f64
}

#[cfg(test)]
mod tests;
