//! Self-supervised and auxiliary objectives.
//!
//! BGRL: two stochastic views of a patch; the online encoder and processor
//! followed by a projector embed the central node of view A, and an EMA
//! target network embeds view B. The loss is `-2 cos(z, h~)`, with the
//! target branch gradient-isolated.
//!
//! Noisy Nodes: atom and bond types are resampled uniformly with
//! probability `p` (possibly redrawing the original type, so the effective
//! corruption rate is `p (V - 1) / V`), coordinates receive Gaussian noise,
//! and decoder heads reconstruct the un-perturbed values.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::featurize::PatchFeatures;
use crate::molgraph::{Molecule, ATOM_VOCAB, BOND_VOCAB};
use crate::pfgm::Matrix;
use crate::processors::{Bound, GnHeads, ParamId, ParamStore};

/// Norm floor in the cosine of the BGRL loss; a zero vector gives loss 0.
pub const BGRL_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewConfig {
    pub feature_dropout: f64,
    pub drop_edge: f64,
}

impl Default for ViewConfig {
    fn default() -> Self {
        ViewConfig { feature_dropout: 0.4, drop_edge: 0.2 }
    }
}

/// One view: inverted dropout on node input features and independent edge
/// removal. All nodes, including the central node, are kept.
pub fn make_view<R: Rng + ?Sized>(input: &PatchFeatures, cfg: &ViewConfig, rng: &mut R) -> Result<PatchFeatures> {
    if !(0.0..1.0).contains(&cfg.feature_dropout) || !(0.0..=1.0).contains(&cfg.drop_edge) {
        return Err(Error::Config(format!("view probabilities out of range: {cfg:?}")));
    }
    let mut nodes = input.nodes.clone();
    if cfg.feature_dropout > 0.0 {
        let scale = (1.0 / (1.0 - cfg.feature_dropout)) as f32;
        for v in &mut nodes.data {
            *v = if rng.random::<f64>() < cfg.feature_dropout { 0.0 } else { *v * scale };
        }
    }
    let keep: Vec<usize> = (0..input.src.len()).filter(|_| cfg.drop_edge == 0.0 || rng.random::<f64>() >= cfg.drop_edge).collect();
    let w = input.edges.cols;
    let edges = Matrix::new(keep.len(), w, keep.iter().flat_map(|&e| input.edges.row(e).iter().copied()).collect())?;
    Ok(PatchFeatures {
        nodes,
        edges,
        src: keep.iter().map(|&e| input.src[e]).collect(),
        dst: keep.iter().map(|&e| input.dst[e]).collect(),
        central: input.central,
    })
}

/// Two independent views of the same patch.
pub fn make_views<R: Rng + ?Sized>(input: &PatchFeatures, cfg: &ViewConfig, rng: &mut R) -> Result<(PatchFeatures, PatchFeatures)> {
    Ok((make_view(input, cfg, rng)?, make_view(input, cfg, rng)?))
}

/// Mean over rows of `-2 cos(z_i, target_i)`. The target enters the tape as
/// a constant, so no gradient reaches whatever produced it.
pub fn bgrl_loss<T: Real>(tape: &mut Tape<T>, z: Var, target: &Tensor<T>) -> Result<Var> {
    let t = tape.constant(target.clone());
    let cos = tape.cosine_similarity(z, t, T::lit(BGRL_NORM_FLOOR))?;
    let m = tape.mean(cos);
    Ok(tape.scale(m, T::lit(-2.0)))
}

/// `target <- decay * target + (1 - decay) * online`, elementwise.
pub fn ema_update<T: Real>(target: &mut Tensor<T>, online: &Tensor<T>, decay: f64) -> Result<()> {
    if target.shape() != online.shape() {
        return Err(Error::shape("ema_update", format!("target {:?} vs online {:?}", target.shape(), online.shape())));
    }
    let (e, r) = (T::lit(decay), T::lit(1.0 - decay));
    for (t, &o) in target.data_mut().iter_mut().zip(online.data()) {
        *t = e * *t + r * o;
    }
    Ok(())
}

/// EMA target copy of the encoder and processor parameters. Decoder and
/// projector parameters have no target copy.
#[derive(Debug, Clone)]
pub struct BgrlState<T> {
    ids: Vec<ParamId>,
    values: Vec<Tensor<T>>,
    decay: f64,
}

impl<T: Real> BgrlState<T> {
    pub fn new(online: &ParamStore<T>, decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::Config(format!("EMA decay must be in [0, 1), got {decay}")));
        }
        let ids: Vec<ParamId> = online.ids().filter(|&id| online.group(id).in_target()).collect();
        let values = ids.iter().map(|&id| online.get(id).clone()).collect();
        Ok(BgrlState { ids, values, decay })
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn ema_update(&mut self, online: &ParamStore<T>) -> Result<()> {
        for (v, &id) in self.values.iter_mut().zip(&self.ids) {
            ema_update(v, online.get(id), self.decay)?;
        }
        Ok(())
    }

    /// Binds the target values as constants at their online positions.
    pub fn bind(&self, tape: &mut Tape<T>, online_len: usize) -> Bound {
        let mut vars = vec![None; online_len];
        for (v, &id) in self.values.iter().zip(&self.ids) {
            vars[id.index()] = Some(tape.constant(v.clone()));
        }
        Bound::from_parts(vars)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyNodesConfig {
    pub p: f64,
    pub sigma: f64,
    pub node_weight: f64,
    pub edge_weight: f64,
    pub displacement_weight: f64,
    pub distance_weight: f64,
}

impl Default for NoisyNodesConfig {
    fn default() -> Self {
        NoisyNodesConfig { p: 0.05, sigma: 0.05, node_weight: 1.0, edge_weight: 1.0, displacement_weight: 1.0, distance_weight: 1.0 }
    }
}

impl NoisyNodesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) || !(self.sigma >= 0.0) {
            return Err(Error::Config(format!("noisy nodes needs p in [0, 1] and sigma >= 0, got p={} sigma={}", self.p, self.sigma)));
        }
        Ok(())
    }
}

/// Reconstruction targets from the un-perturbed molecule, per atom and per
/// directed edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseTargets {
    pub atom_types: Vec<usize>,
    pub bond_types: Vec<usize>,
    /// `[E x 3]`, `x_dst - x_src`.
    pub displacement: Option<Tensor<f64>>,
    /// `[E x 1]`.
    pub distance: Option<Tensor<f64>>,
}

impl DenoiseTargets {
    pub fn of(m: &Molecule) -> Self {
        let (src, dst) = m.directed_edges();
        let bond_types = m.bonds.iter().flat_map(|b| [b.order as usize; 2]).collect();
        let (displacement, distance) = match &m.coords {
            None => (None, None),
            Some(c) => {
                let mut disp = Vec::with_capacity(3 * src.len());
                let mut dist = Vec::with_capacity(src.len());
                for (&s, &d) in src.iter().zip(&dst) {
                    let v: Vec<f64> = (0..3).map(|k| c[d as usize][k] - c[s as usize][k]).collect();
                    dist.push(v.iter().map(|x| x * x).sum::<f64>().sqrt());
                    disp.extend(v);
                }
                (Some(Tensor::from_vec(src.len(), 3, disp).expect("sized")), Some(Tensor::from_vec(src.len(), 1, dist).expect("sized")))
            }
        };
        DenoiseTargets { atom_types: m.atoms.iter().map(|a| a.element as usize).collect(), bond_types, displacement, distance }
    }

    /// Stacks per-molecule targets in batch order. Position targets are kept
    /// only when every molecule has them.
    pub fn concat(parts: &[DenoiseTargets]) -> Self {
        let stack = |get: fn(&DenoiseTargets) -> &Option<Tensor<f64>>, cols: usize| -> Option<Tensor<f64>> {
            let mut data = Vec::new();
            for p in parts {
                data.extend_from_slice(get(p).as_ref()?.data());
            }
            Some(Tensor::from_vec(data.len() / cols, cols, data).expect("sized"))
        };
        DenoiseTargets {
            atom_types: parts.iter().flat_map(|p| p.atom_types.iter().copied()).collect(),
            bond_types: parts.iter().flat_map(|p| p.bond_types.iter().copied()).collect(),
            displacement: stack(|p| &p.displacement, 3),
            distance: stack(|p| &p.distance, 1),
        }
    }
}

/// Corrupts atom and bond types (uniform resampling with probability `p`)
/// and coordinates (Gaussian noise of scale `sigma`). Topology, charges and
/// ring flags are unchanged. Targets describe the original molecule.
pub fn corrupt_molecule<R: Rng + ?Sized>(m: &Molecule, cfg: &NoisyNodesConfig, rng: &mut R) -> Result<(Molecule, DenoiseTargets)> {
    cfg.validate()?;
    let targets = DenoiseTargets::of(m);
    let mut out = m.clone();
    for a in &mut out.atoms {
        if rng.random::<f64>() < cfg.p {
            a.element = rng.random_range(0..ATOM_VOCAB) as u8;
        }
    }
    for b in &mut out.bonds {
        if rng.random::<f64>() < cfg.p {
            b.order = rng.random_range(0..BOND_VOCAB) as u8;
        }
    }
    if let Some(c) = &mut out.coords {
        if cfg.sigma > 0.0 {
            let noise = Normal::new(0.0, cfg.sigma).map_err(|e| Error::Config(e.to_string()))?;
            for v in c.iter_mut().flatten() {
                *v += noise.sample(rng);
            }
        }
    }
    Ok((out, targets))
}

#[derive(Debug, Clone, Copy)]
pub struct DenoiseLosses {
    pub node: Var,
    pub edge: Var,
    pub displacement: Option<Var>,
    pub distance: Option<Var>,
}

impl DenoiseLosses {
    /// Weighted sum of the terms.
    pub fn total<T: Real>(&self, tape: &mut Tape<T>, cfg: &NoisyNodesConfig) -> Result<Var> {
        let mut acc = tape.scale(self.node, T::lit(cfg.node_weight));
        let terms = [(Some(self.edge), cfg.edge_weight), (self.displacement, cfg.displacement_weight), (self.distance, cfg.distance_weight)];
        for (v, w) in terms {
            if let Some(v) = v {
                let s = tape.scale(v, T::lit(w));
                acc = tape.add(acc, s)?;
            }
        }
        Ok(acc)
    }
}

/// Mean cross-entropy over atoms and over directed edges, and mean absolute
/// error of the position heads when both heads and targets exist. Empty
/// sets contribute zero.
pub fn denoise_losses<T: Real>(tape: &mut Tape<T>, heads: &GnHeads, targets: &DenoiseTargets) -> Result<DenoiseLosses> {
    let ce = |tape: &mut Tape<T>, logits: Var, labels: &[usize]| -> Result<Var> {
        if labels.is_empty() && tape.value(logits).rows() == 0 {
            Ok(tape.constant(Tensor::scalar(T::zero())))
        } else {
            tape.softmax_cross_entropy(logits, labels)
        }
    };
    let node = ce(tape, heads.atoms, &targets.atom_types)?;
    let edge = ce(tape, heads.bonds, &targets.bond_types)?;
    let mut mae = |pred: Option<Var>, target: &Option<Tensor<f64>>| -> Result<Option<Var>> {
        match (pred, target) {
            (Some(_), Some(t)) if t.is_empty() => Ok(Some(tape.constant(Tensor::scalar(T::zero())))),
            (Some(p), Some(t)) => Ok(Some(tape.mean_absolute_error(p, &t.cast())?)),
            _ => Ok(None),
        }
    };
    let displacement = mae(heads.displacement, &targets.displacement)?;
    let distance = mae(heads.distance, &targets.distance)?;
    Ok(DenoiseLosses { node, edge, displacement, distance })
}

#[cfg(test)]
mod tests;
