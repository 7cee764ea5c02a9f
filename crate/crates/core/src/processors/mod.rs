//! Encode-process-decode models.
//!
//! Inputs are encoded into node, edge and (for graph-level tasks) graph
//! latents, transformed by `T` processor steps with unshared parameters, and
//! decoded into predictions. Two processor families are provided:
//! - [`MpnnModel`]: messages `m_uv = psi(h_u, h_v, h0_uv)` over the static
//!   encoded edge latents, with node updates pooling both incoming and
//!   outgoing messages.
//! - [`GnModel`]: Graph Network blocks updating edges, then nodes, then the
//!   graph latent, with sum aggregations.

mod batch;
mod checkpoint;
mod gn;
mod mlp;
mod mpnn;
mod params;
mod verify;

use rand::Rng;

pub use batch::{GraphBatch, GraphItem};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ModelConfig};
pub use gn::{GnConfig, GnHeads, GnModel};
pub use mlp::{Activation, Mlp, MlpSpec, LAYER_NORM_EPS};
pub use mpnn::{MpnnConfig, MpnnModel};
pub use params::{Bound, ParamGroup, ParamId, ParamStore};
pub use verify::{gn_gradcheck, model_gradchecks, mpnn_gradcheck};

use crate::autodiff::Var;
use crate::rng::StreamRng;

/// Latents `H(t)` on a tape. `graph` is absent for node-level models.
#[derive(Debug, Clone, Copy)]
pub struct LatentState {
    pub nodes: Var,
    pub edges: Var,
    pub graph: Option<Var>,
}

/// Training-time stochastic regularisation for one forward pass. `None` in
/// forward calls means evaluation mode.
pub type Noise<'a> = Option<&'a mut StreamRng>;

/// Indices of edges surviving drop-edge, or `None` when all survive.
pub(crate) fn surviving_edges(num_edges: usize, p: f64, rng: Option<&mut StreamRng>) -> Option<Vec<u32>> {
    match rng {
        Some(rng) if p > 0.0 => Some((0..num_edges as u32).filter(|_| rng.random::<f64>() >= p).collect()),
        _ => None,
    }
}

pub(crate) fn select<T: Copy>(v: &[T], idx: &Option<Vec<u32>>) -> Vec<T> {
    match idx {
        Some(i) => i.iter().map(|&j| v[j as usize]).collect(),
        None => v.to_vec(),
    }
}

#[cfg(test)]
mod tests;
