use rand::Rng;

use super::{Activation, Bound, GnConfig, GnModel, GraphBatch, GraphItem, MpnnConfig, MpnnModel, ParamStore};
use crate::autodiff::{gradcheck, GradcheckReport, Tensor, Var};
use crate::error::Result;
use crate::molgraph::{mol_features, parse_smiles, Molecule, ATOM_VOCAB, BOND_VOCAB};
use crate::objectives::{denoise_losses, DenoiseTargets};
use crate::pfgm::Matrix;
use crate::rng::Stream;

/// Moves every parameter off its initial value. Zero biases feed constant
/// vectors into layer norm, where finite differences lose accuracy.
fn jitter(store: &ParamStore<f64>, stream: Stream) -> Vec<Tensor<f64>> {
    let mut rng = stream.rng();
    store
        .values()
        .iter()
        .map(|t| {
            let data = t.data().iter().map(|&v| v + rng.random_range(-1.0..1.0)).collect();
            Tensor::from_vec(t.rows(), t.cols(), data).expect("same shape")
        })
        .collect()
}

fn bind_all(vars: &[Var]) -> Bound {
    Bound::from_parts(vars.iter().copied().map(Some).collect())
}

/// Random patch-shaped graph: node `i > 0` sends an edge to a parent below
/// it, plus a few extra edges, so everything flows toward node 0.
fn patch_like(n: usize, extra: usize, node_w: usize, edge_w: usize, stream: Stream) -> (Matrix, Matrix, Vec<u32>, Vec<u32>) {
    let mut rng = stream.rng();
    let (mut src, mut dst) = (Vec::new(), Vec::new());
    for i in 1..n {
        src.push(i as u32);
        dst.push(rng.random_range(0..i) as u32);
    }
    for _ in 0..extra {
        src.push(rng.random_range(0..n) as u32);
        dst.push(rng.random_range(0..n) as u32);
    }
    let mut v = |len: usize| (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>();
    let nodes = Matrix::new(n, node_w, v(n * node_w)).expect("sized");
    let edges = Matrix::new(src.len(), edge_w, v(src.len() * edge_w)).expect("sized");
    (nodes, edges, src, dst)
}

/// 4-step MPNN on a 10-node patch: classification plus a BGRL-style cosine
/// term, so the decoder and projector are covered.
pub fn mpnn_gradcheck(seed: u64) -> Result<GradcheckReport> {
    let root = Stream::root(seed).named("mpnn-gradcheck");
    let mut cfg = MpnnConfig::new(6, 4, 3);
    cfg.latent = 4;
    cfg.hidden = 6;
    cfg.steps = 4;
    cfg.activation = Activation::Tanh;
    let mut store = ParamStore::<f64>::new();
    let model = MpnnModel::new(cfg, &mut store, &mut root.named("init").rng())?;
    let (nodes, edges, src, dst) = patch_like(10, 4, 6, 4, root.named("patch"));
    let item = GraphItem { node_x: &nodes, edge_x: &edges, src: &src, dst: &dst, central: 0 };
    let batch = GraphBatch::<f64>::pack(&[item], 1)?;
    let target = {
        let mut rng = root.named("target").rng();
        Tensor::from_vec(1, 4, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())?
    };
    gradcheck(
        |tape, vars| {
            let bound = bind_all(vars);
            let z = model.embed_centrals(tape, &bound, &batch, None)?;
            let logits = model.decode(tape, &bound, z)?;
            let ce = tape.softmax_cross_entropy(logits, &[2])?;
            let q = model.project(tape, &bound, z)?;
            let t = tape.constant(target.clone());
            let cos = tape.cosine_similarity(q, t, 1e-12)?;
            let cos = tape.mean(cos);
            tape.sub(ce, cos)
        },
        &jitter(&store, root.named("jitter")),
        1e-4,
    )
}

/// 4-step GN on a 6-atom molecule with conformer features: gap MAE plus
/// all denoising heads.
pub fn gn_gradcheck(seed: u64) -> Result<GradcheckReport> {
    let root = Stream::root(seed).named("gn-gradcheck");
    let base = parse_smiles("CC(=O)NCO")?;
    let mut rng = root.named("coords").rng();
    let coords = (0..base.num_atoms()).map(|_| [0, 1, 2].map(|_| rng.random_range(-1.5..1.5))).collect();
    let mol = Molecule::new(base.atoms.clone(), base.bonds.clone(), Some(coords), Some(5.0))?;
    let f = mol_features(&mol);
    let mut cfg = GnConfig::new(f.nodes.cols, f.edges.cols, ATOM_VOCAB, BOND_VOCAB);
    cfg.latent = 4;
    cfg.hidden = 5;
    cfg.steps = 4;
    cfg.encoder_layers = 2;
    cfg.processor_layers = 2;
    cfg.decoder_layers = 2;
    cfg.activation = Activation::Tanh;
    cfg.position_heads = true;
    let mut store = ParamStore::<f64>::new();
    let model = GnModel::new(cfg, &mut store, &mut root.named("init").rng())?;
    let batch = GraphBatch::<f64>::pack(&[f.item()], 1)?;
    let targets = DenoiseTargets::of(&mol);
    let gap = Tensor::from_vec(1, 1, vec![5.0])?;
    gradcheck(
        |tape, vars| {
            let bound = bind_all(vars);
            let heads = model.forward(tape, &bound, &batch, None)?;
            let mae = tape.mean_absolute_error(heads.gap, &gap)?;
            let d = denoise_losses(tape, &heads, &targets)?;
            let mut total = tape.add(mae, d.node)?;
            for v in [Some(d.edge), d.displacement, d.distance].into_iter().flatten() {
                total = tape.add(total, v)?;
            }
            Ok(total)
        },
        &jitter(&store, root.named("jitter")),
        1e-4,
    )
}

/// Both model families, by name.
pub fn model_gradchecks(seed: u64) -> Result<Vec<(String, GradcheckReport)>> {
    Ok(vec![("mpnn".to_string(), mpnn_gradcheck(seed)?), ("gn".to_string(), gn_gradcheck(seed)?)])
}
