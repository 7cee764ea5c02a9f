use rand::Rng;

use super::*;
use crate::autodiff::{gradcheck, Tape, Tensor};
use crate::pfgm::Matrix;
use crate::rng::Stream;

/// Plain-loop evaluation of an [`Mlp`] from its named parameters (relu).
fn dense_mlp(store: &ParamStore<f64>, name: &str, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let mut l = 0;
    loop {
        let w = store.get(store.find(&format!("{name}.l{l}.w")).unwrap());
        let b = store.get(store.find(&format!("{name}.l{l}.b")).unwrap());
        assert_eq!(w.rows(), h.len());
        h = (0..w.cols()).map(|j| b.get(0, j) + (0..w.rows()).map(|i| h[i] * w.get(i, j)).sum::<f64>()).collect();
        let Some(g) = store.find(&format!("{name}.ln{l}.gain")) else { return h };
        let beta = store.get(store.find(&format!("{name}.ln{l}.bias")).unwrap());
        let g = store.get(g);
        for v in &mut h {
            *v = v.max(0.0);
        }
        let k = h.len() as f64;
        let mean = h.iter().sum::<f64>() / k;
        let var = h.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
        for (j, v) in h.iter_mut().enumerate() {
            *v = (*v - mean) / (var + LAYER_NORM_EPS).sqrt() * g.get(0, j) + beta.get(0, j);
        }
        l += 1;
    }
}

struct RandGraph {
    node_x: Matrix,
    edge_x: Matrix,
    src: Vec<u32>,
    dst: Vec<u32>,
}

impl RandGraph {
    fn new(n: usize, e: usize, nw: usize, ew: usize, seed: u64) -> Self {
        let mut rng = Stream::root(seed).rng();
        let mut v = |len: usize| (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>();
        let node_x = Matrix::new(n, nw, v(n * nw)).unwrap();
        let edge_x = Matrix::new(e, ew, v(e * ew)).unwrap();
        let mut rng = Stream::root(seed).named("edges").rng();
        let src = (0..e).map(|_| rng.random_range(0..n as u32)).collect();
        let dst = (0..e).map(|_| rng.random_range(0..n as u32)).collect();
        RandGraph { node_x, edge_x, src, dst }
    }

    fn item(&self, central: u32) -> GraphItem<'_> {
        GraphItem { node_x: &self.node_x, edge_x: &self.edge_x, src: &self.src, dst: &self.dst, central }
    }

    /// Relabels node `i` as `perm[i]`; edge order is kept.
    fn permuted(&self, perm: &[usize]) -> Self {
        let (n, w) = (self.node_x.rows, self.node_x.cols);
        let mut data = vec![0.0; n * w];
        for (i, &p) in perm.iter().enumerate() {
            data[p * w..(p + 1) * w].copy_from_slice(self.node_x.row(i));
        }
        RandGraph {
            node_x: Matrix::new(n, w, data).unwrap(),
            edge_x: self.edge_x.clone(),
            src: self.src.iter().map(|&s| perm[s as usize] as u32).collect(),
            dst: self.dst.iter().map(|&d| perm[d as usize] as u32).collect(),
        }
    }
}

fn small_mpnn(steps: usize, activation: Activation, seed: u64) -> (MpnnModel, ParamStore<f64>) {
    let mut cfg = MpnnConfig::new(5, 3, 3);
    cfg.latent = 4;
    cfg.hidden = 6;
    cfg.steps = steps;
    cfg.activation = activation;
    let mut store = ParamStore::new();
    let m = MpnnModel::new(cfg, &mut store, &mut Stream::root(seed).rng()).unwrap();
    (m, store)
}

fn small_gn(steps: usize, activation: Activation, seed: u64) -> (GnModel, ParamStore<f64>) {
    let mut cfg = GnConfig::new(5, 3, 4, 3);
    cfg.latent = 4;
    cfg.hidden = 5;
    cfg.steps = steps;
    cfg.encoder_layers = 2;
    cfg.processor_layers = 2;
    cfg.decoder_layers = 2;
    cfg.activation = activation;
    cfg.position_heads = true;
    let mut store = ParamStore::new();
    let m = GnModel::new(cfg, &mut store, &mut Stream::root(seed).rng()).unwrap();
    (m, store)
}

fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut rng = Stream::root(seed).named("tensor").rng();
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "entry {i}: {x} vs {y}");
    }
}

#[test]
fn mpnn_step_matches_dense_edge_loop() {
    let (model, store) = small_mpnn(1, Activation::Relu, 3);
    let g = RandGraph::new(10, 25, 5, 3, 11);
    let batch = GraphBatch::<f64>::pack(&[g.item(0)], 1).unwrap();
    let h = random_tensor(10, 4, 1);
    let e0 = random_tensor(25, 4, 2);
    let mut tape = Tape::new();
    let b = store.bind(&mut tape);
    let (hv, ev) = (tape.constant(h.clone()), tape.constant(e0.clone()));
    let out = model.step(0, &mut tape, &b, &batch, hv, ev, None).unwrap();

    let mut incoming = vec![vec![0.0; 4]; 10];
    let mut outgoing = vec![vec![0.0; 4]; 10];
    for e in 0..25 {
        let (u, v) = (g.src[e] as usize, g.dst[e] as usize);
        let x: Vec<f64> = [h.row(u), h.row(v), e0.row(e)].concat();
        let m = dense_mlp(&store, "proc0.msg", &x);
        for j in 0..4 {
            incoming[v][j] += m[j];
            outgoing[u][j] += m[j];
        }
    }
    for u in 0..10 {
        let x: Vec<f64> = [h.row(u), &incoming[u], &outgoing[u]].concat();
        assert_close(tape.value(out).row(u), &dense_mlp(&store, "proc0.upd", &x), 1e-12);
    }
}

#[test]
fn mpnn_single_edge_and_edgeless_updates() {
    let (model, store) = small_mpnn(1, Activation::Relu, 4);
    let node_x = Matrix::new(2, 5, vec![0.1; 10]).unwrap();
    let edge_x = Matrix::new(1, 3, vec![0.2; 3]).unwrap();
    let item = GraphItem { node_x: &node_x, edge_x: &edge_x, src: &[0], dst: &[1], central: 0 };
    let batch = GraphBatch::<f64>::pack(&[item], 1).unwrap();
    let h = random_tensor(2, 4, 5);
    let e0 = random_tensor(1, 4, 6);
    let mut tape = Tape::new();
    let b = store.bind(&mut tape);
    let (hv, ev) = (tape.constant(h.clone()), tape.constant(e0.clone()));
    let out = model.step(0, &mut tape, &b, &batch, hv, ev, None).unwrap();
    let m = dense_mlp(&store, "proc0.msg", &[h.row(0), h.row(1), e0.row(0)].concat());
    let z = vec![0.0; 4];
    assert_close(tape.value(out).row(0), &dense_mlp(&store, "proc0.upd", &[h.row(0), &z, &m].concat()), 1e-12);
    assert_close(tape.value(out).row(1), &dense_mlp(&store, "proc0.upd", &[h.row(1), &m, &z].concat()), 1e-12);

    // One node, no edges: the edge block is empty and the update is phi(h, 0, 0).
    let one = Matrix::new(1, 5, vec![0.3; 5]).unwrap();
    let none = Matrix::new(0, 3, vec![]).unwrap();
    let batch = GraphBatch::<f64>::pack(&[GraphItem { node_x: &one, edge_x: &none, src: &[], dst: &[], central: 0 }], 1).unwrap();
    let mut tape = Tape::new();
    let b = store.bind(&mut tape);
    let s = model.encode(&mut tape, &b, &batch).unwrap();
    assert_eq!(tape.value(s.edges).shape(), (0, 4));
    let hn = tape.value(s.nodes).clone();
    let out = model.step(0, &mut tape, &b, &batch, s.nodes, s.edges, None).unwrap();
    assert_close(tape.value(out).row(0), &dense_mlp(&store, "proc0.upd", &[hn.row(0), &z, &z].concat()), 1e-12);
    let logits = model.logits(&mut tape, &b, &batch, None).unwrap();
    assert_eq!(tape.value(logits).shape(), (1, 3));
}

#[test]
fn mpnn_unidirectional_ignores_outgoing() {
    let (model, store) = small_mpnn(1, Activation::Relu, 3);
    let mut cfg = model.config().clone();
    cfg.bidirectional = false;
    let mut store2 = ParamStore::new();
    let uni = MpnnModel::new(cfg, &mut store2, &mut Stream::root(3).rng()).unwrap();
    assert_eq!(store, store2);
    let g = RandGraph::new(6, 9, 5, 3, 2);
    let batch = GraphBatch::<f64>::pack(&[g.item(0)], 1).unwrap();
    let h = random_tensor(6, 4, 1);
    let e0 = random_tensor(9, 4, 2);
    let mut tape = Tape::new();
    let b = store.bind(&mut tape);
    let (hv, ev) = (tape.constant(h.clone()), tape.constant(e0.clone()));
    let out = uni.step(0, &mut tape, &b, &batch, hv, ev, None).unwrap();
    let mut incoming = vec![vec![0.0; 4]; 6];
    for e in 0..9 {
        let m = dense_mlp(&store, "proc0.msg", &[h.row(g.src[e] as usize), h.row(g.dst[e] as usize), e0.row(e)].concat());
        for j in 0..4 {
            incoming[g.dst[e] as usize][j] += m[j];
        }
    }
    for u in 0..6 {
        let x = [h.row(u), &incoming[u], &[0.0; 4]].concat();
        assert_close(tape.value(out).row(u), &dense_mlp(&store, "proc0.upd", &x), 1e-12);
    }
}

#[test]
fn zero_messages_make_updates_topology_independent() {
    let (model, mut store) = small_mpnn(2, Activation::Relu, 8);
    for t in 0..2 {
        for p in ["w", "b"] {
            let id = store.find(&format!("proc{t}.msg.l1.{p}")).unwrap();
            store.get_mut(id).data_mut().fill(0.0);
        }
    }
    let a = RandGraph::new(7, 12, 5, 3, 1);
    let mut b = RandGraph::new(7, 3, 5, 3, 2);
    b.node_x = a.node_x.clone();
    let latents = |g: &RandGraph| {
        let batch = GraphBatch::<f64>::pack(&[g.item(0)], 1).unwrap();
        let mut tape = Tape::new();
        let bd = store.bind(&mut tape);
        let h = model.process(&mut tape, &bd, &batch, None).unwrap();
        tape.value(h).data().to_vec()
    };
    assert_eq!(latents(&a), latents(&b));
}

#[test]
fn gn_step_matches_naive_loops() {
    let (model, store) = small_gn(1, Activation::Relu, 5);
    let g = RandGraph::new(5, 8, 5, 3, 21);
    let batch = GraphBatch::<f64>::pack(&[g.item(0)], 1).unwrap();
    let h = random_tensor(5, 4, 1);
    let he = random_tensor(8, 4, 2);
    let hg = random_tensor(1, 4, 3);
    let mut tape = Tape::new();
    let b = store.bind(&mut tape);
    let state = LatentState { nodes: tape.constant(h.clone()), edges: tape.constant(he.clone()), graph: Some(tape.constant(hg.clone())) };
    let out = model.step(0, &mut tape, &b, &batch, state, None).unwrap();

    let gl = hg.row(0);
    let edges: Vec<Vec<f64>> = (0..8)
        .map(|e| dense_mlp(&store, "proc0.edge", &[h.row(g.src[e] as usize), h.row(g.dst[e] as usize), he.row(e), gl].concat()))
        .collect();
    let mut nodes = Vec::new();
    for u in 0..5 {
        let mut inc = vec![0.0; 4];
        for e in 0..8 {
            if g.dst[e] as usize == u {
                (0..4).for_each(|j| inc[j] += edges[e][j]);
            }
        }
        nodes.push(dense_mlp(&store, "proc0.node", &[h.row(u), &inc, gl].concat()));
    }
    let sum = |rows: &[Vec<f64>]| (0..4).map(|j| rows.iter().map(|r| r[j]).sum()).collect::<Vec<f64>>();
    let graph = dense_mlp(&store, "proc0.graph", &[sum(&nodes), sum(&edges), gl.to_vec()].concat());
    for e in 0..8 {
        assert_close(tape.value(out.edges).row(e), &edges[e], 1e-12);
    }
    for u in 0..5 {
        assert_close(tape.value(out.nodes).row(u), &nodes[u], 1e-12);
    }
    assert_close(tape.value(out.graph.unwrap()).row(0), &graph, 1e-12);
}

#[test]
fn gn_edgeless_graph_and_constant_graph_encoding() {
    let (model, store) = small_gn(2, Activation::Relu, 6);
    let one = Matrix::new(1, 5, vec![0.3; 5]).unwrap();
    let none = Matrix::new(0, 3, vec![]).unwrap();
    let g = RandGraph::new(4, 5, 5, 3, 1);
    let items = [GraphItem { node_x: &one, edge_x: &none, src: &[], dst: &[], central: 0 }, g.item(0)];
    let batch = GraphBatch::<f64>::pack(&items, 1).unwrap();
    let mut tape = Tape::new();
    let b = store.bind(&mut tape);
    let s = model.encode(&mut tape, &b, &batch).unwrap();
    let gv = tape.value(s.graph.unwrap());
    assert_eq!(gv.row(0), gv.row(1));
    let heads = model.forward(&mut tape, &b, &batch, None).unwrap();
    assert_eq!(tape.value(heads.gap).shape(), (2, 1));
    assert_eq!(tape.value(heads.atoms).shape(), (5, 4));
    assert_eq!(tape.value(heads.bonds).shape(), (5, 3));
    assert_eq!(tape.value(heads.displacement.unwrap()).shape(), (5, 3));
    assert_eq!(tape.value(heads.distance.unwrap()).shape(), (5, 1));

    // The lone node sees zero edge sums in both the node and graph updates.
    let single = GraphBatch::<f64>::pack(&items[..1], 1).unwrap();
    let mut tape = Tape::new();
    let b = store.bind(&mut tape);
    let s = model.encode(&mut tape, &b, &single).unwrap();
    let (h, hg) = (tape.value(s.nodes).clone(), tape.value(s.graph.unwrap()).clone());
    let out = model.step(0, &mut tape, &b, &single, s, None).unwrap();
    let z = vec![0.0; 4];
    let node = dense_mlp(&store, "proc0.node", &[h.row(0), &z, hg.row(0)].concat());
    assert_close(tape.value(out.nodes).row(0), &node, 1e-12);
    let graph = dense_mlp(&store, "proc0.graph", &[&node[..], &z, hg.row(0)].concat());
    assert_close(tape.value(out.graph.unwrap()).row(0), &graph, 1e-12);
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn permutation_equivariance_exhaustive() {
    let (mpnn, ms) = small_mpnn(2, Activation::Relu, 1);
    let (gn, gs) = small_gn(2, Activation::Relu, 2);
    for n in [3usize, 6] {
        let g = RandGraph::new(n, 2 * n, 5, 3, n as u64);
        let base_m = {
            let batch = GraphBatch::<f64>::pack(&[g.item(0)], 1).unwrap();
            let mut tape = Tape::new();
            let b = ms.bind(&mut tape);
            let h = mpnn.process(&mut tape, &b, &batch, None).unwrap();
            tape.value(h).clone()
        };
        let base_g = {
            let batch = GraphBatch::<f64>::pack(&[g.item(0)], 1).unwrap();
            let mut tape = Tape::new();
            let b = gs.bind(&mut tape);
            let s = gn.process(&mut tape, &b, &batch, None).unwrap();
            (tape.value(s.nodes).clone(), tape.value(s.graph.unwrap()).clone())
        };
        for perm in permutations(n) {
            let pg = g.permuted(&perm);
            let batch = GraphBatch::<f64>::pack(&[pg.item(perm[0] as u32)], 1).unwrap();
            let mut tape = Tape::new();
            let b = ms.bind(&mut tape);
            let h = mpnn.process(&mut tape, &b, &batch, None).unwrap();
            let mut tape2 = Tape::new();
            let b2 = gs.bind(&mut tape2);
            let s = gn.process(&mut tape2, &b2, &batch, None).unwrap();
            for (i, &p) in perm.iter().enumerate() {
                assert_close(tape.value(h).row(p), base_m.row(i), 1e-10);
                assert_close(tape2.value(s.nodes).row(p), base_g.0.row(i), 1e-10);
            }
            assert_close(tape2.value(s.graph.unwrap()).data(), base_g.1.data(), 1e-10);
        }
    }
}

fn bind_vars(vars: &[crate::autodiff::Var]) -> Bound {
    Bound::from_parts(vars.iter().copied().map(Some).collect())
}

#[test]
fn mpnn_end_to_end_gradcheck() {
    let (model, store) = small_mpnn(4, Activation::Tanh, 12);
    let a = RandGraph::new(10, 18, 5, 3, 4);
    let b = RandGraph::new(4, 5, 5, 3, 5);
    let batch = GraphBatch::<f64>::pack(&[a.item(0), b.item(2)], 1).unwrap();
    let report = gradcheck(
        |tape, vars| {
            let bound = bind_vars(vars);
            let c = model.embed_centrals(tape, &bound, &batch, None)?;
            let logits = model.decode(tape, &bound, c)?;
            let ce = tape.softmax_cross_entropy(logits, &[1, 2])?;
            let z = model.project(tape, &bound, c)?;
            let cos = tape.cosine_similarity(z, c, 1e-12)?;
            let cos = tape.mean(cos);
            tape.sub(ce, cos)
        },
        store.values(),
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error <= 1e-4, "{report:?}");
}

#[test]
fn gn_end_to_end_gradcheck() {
    let (model, store) = small_gn(4, Activation::Tanh, 13);
    let g = RandGraph::new(6, 10, 5, 3, 6);
    let batch = GraphBatch::<f64>::pack(&[g.item(0)], 1).unwrap();
    let gap = Tensor::from_vec(1, 1, vec![0.7]).unwrap();
    let disp = random_tensor(10, 3, 9);
    let report = gradcheck(
        |tape, vars| {
            let bound = bind_vars(vars);
            let h = model.forward(tape, &bound, &batch, None)?;
            let l1 = tape.mean_absolute_error(h.gap, &gap)?;
            let l2 = tape.softmax_cross_entropy(h.atoms, &[0, 1, 2, 3, 0, 1])?;
            let l3 = tape.softmax_cross_entropy(h.bonds, &[0, 1, 2, 0, 1, 2, 0, 1, 2, 0])?;
            let l4 = tape.mean_absolute_error(h.displacement.unwrap(), &disp)?;
            let s = tape.add(l1, l2)?;
            let s = tape.add(s, l3)?;
            tape.add(s, l4)
        },
        store.values(),
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error <= 1e-4, "{report:?}");
}

#[test]
fn perturbing_a_step_only_changes_later_steps() {
    let (model, store) = small_mpnn(4, Activation::Relu, 14);
    let (gn, gstore) = small_gn(4, Activation::Relu, 15);
    let g = RandGraph::new(8, 14, 5, 3, 7);
    let batch = GraphBatch::<f64>::pack(&[g.item(0)], 1).unwrap();
    let trace = |store: &ParamStore<f64>| {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let s = model.encode(&mut tape, &b, &batch).unwrap();
        let mut h = s.nodes;
        let mut out = Vec::new();
        for t in 0..4 {
            h = model.step(t, &mut tape, &b, &batch, h, s.edges, None).unwrap();
            out.push(tape.value(h).data().to_vec());
        }
        out
    };
    let gtrace = |store: &ParamStore<f64>| {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let mut s = gn.encode(&mut tape, &b, &batch).unwrap();
        let mut out = Vec::new();
        for t in 0..4 {
            s = gn.step(t, &mut tape, &b, &batch, s, None).unwrap();
            out.push(tape.value(s.graph.unwrap()).data().to_vec());
        }
        out
    };
    let perturb = |store: &ParamStore<f64>, prefix: &str| {
        let mut p = store.clone();
        for id in store.ids().filter(|&id| store.name(id).starts_with(prefix)) {
            p.get_mut(id).data_mut().iter_mut().for_each(|v| *v += 0.05);
        }
        p
    };
    let (base, pert) = (trace(&store), trace(&perturb(&store, "proc2.")));
    let (gbase, gpert) = (gtrace(&gstore), gtrace(&perturb(&gstore, "proc2.")));
    for t in 0..4 {
        assert_eq!(base[t] == pert[t], t < 2, "mpnn step {t}");
        assert_eq!(gbase[t] == gpert[t], t < 2, "gn step {t}");
    }
}

#[test]
fn deterministic_and_width_checked() {
    let (model, store) = small_mpnn(2, Activation::Relu, 16);
    let g = RandGraph::new(5, 6, 5, 3, 8);
    let batch = GraphBatch::<f64>::pack(&[g.item(1)], 1).unwrap();
    let run = || {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let l = model.logits(&mut tape, &b, &batch, None).unwrap();
        tape.value(l).data().to_vec()
    };
    assert_eq!(run(), run());
    let wrong = RandGraph::new(5, 6, 4, 3, 8);
    let batch = GraphBatch::<f64>::pack(&[wrong.item(0)], 1).unwrap();
    let mut tape = Tape::new();
    let b = store.bind(&mut tape);
    assert!(matches!(model.encode(&mut tape, &b, &batch), Err(crate::Error::Input(_))));
}

#[test]
fn drop_edge_and_dropout_only_in_training() {
    let mut cfg = small_mpnn(2, Activation::Relu, 1).0.config().clone();
    cfg.dropout = 0.5;
    cfg.drop_edge = 0.5;
    let mut store = ParamStore::<f64>::new();
    let model = MpnnModel::new(cfg, &mut store, &mut Stream::root(1).rng()).unwrap();
    let g = RandGraph::new(8, 20, 5, 3, 9);
    let batch = GraphBatch::<f64>::pack(&[g.item(0)], 1).unwrap();
    let run = |seed: Option<u64>| {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let mut rng = seed.map(|s| Stream::root(s).rng());
        let l = model.logits(&mut tape, &b, &batch, rng.as_mut()).unwrap();
        tape.value(l).data().to_vec()
    };
    assert_eq!(run(None), run(None));
    assert_eq!(run(Some(1)), run(Some(1)));
    assert_ne!(run(Some(1)), run(None));
    assert_ne!(run(Some(1)), run(Some(2)));
}

#[test]
fn checkpoint_roundtrip_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = MpnnConfig::new(5, 3, 3);
    cfg.latent = 4;
    cfg.hidden = 6;
    let mut store = ParamStore::<f32>::new();
    let model = MpnnModel::new(cfg.clone(), &mut store, &mut Stream::root(77).rng()).unwrap();
    save_checkpoint(dir.path(), &ModelConfig::Mpnn(cfg.clone()), &store).unwrap();
    let ck = load_checkpoint(dir.path()).unwrap();
    assert_eq!(ck.config, ModelConfig::Mpnn(cfg));
    let (m2, s2) = ck.mpnn().unwrap();
    assert_eq!(s2, store);
    assert!(ck.gn().is_err());
    let g = RandGraph::new(5, 6, 5, 3, 8);
    let batch = GraphBatch::<f32>::pack(&[g.item(1)], 1).unwrap();
    let run = |m: &MpnnModel, s: &ParamStore<f32>| {
        let mut tape = Tape::new();
        let b = s.bind(&mut tape);
        let l = m.logits(&mut tape, &b, &batch, None).unwrap();
        tape.value(l).data().to_vec()
    };
    assert_eq!(run(&model, &store), run(&m2, &s2));

    let mut gcfg = GnConfig::new(5, 3, 4, 3);
    gcfg.latent = 4;
    gcfg.hidden = 4;
    gcfg.steps = 2;
    let mut gstore = ParamStore::<f32>::new();
    GnModel::new(gcfg.clone(), &mut gstore, &mut Stream::root(1).rng()).unwrap();
    let gdir = dir.path().join("gn");
    save_checkpoint(&gdir, &ModelConfig::Gn(gcfg), &gstore).unwrap();
    assert_eq!(load_checkpoint(&gdir).unwrap().gn().unwrap().1, gstore);
    std::fs::write(gdir.join(checkpoint::MANIFEST), "mode = cnn\n").unwrap();
    assert!(matches!(load_checkpoint(&gdir), Err(crate::Error::Format { .. })));
}


#[test]
fn verification_suite_passes() {
    for (name, r) in model_gradchecks(3).unwrap() {
        assert!(r.max_rel_error <= crate::autodiff::GRADCHECK_TOLERANCE && r.checked > 100, "{name}: {r:?}");
    }
}
