use rand::Rng;

use super::*;
use crate::molgraph::{synth_mol_dataset, SynthMolConfig};
use crate::processors::{Activation, GnConfig, GnModel, MpnnConfig, MpnnModel, ParamGroup};
use crate::rng::Stream;

fn patch(nodes: usize, edges: usize, seed: u64) -> PatchFeatures {
    let mut rng = Stream::root(seed).rng();
    PatchFeatures {
        nodes: Matrix::new(nodes, 3, (0..nodes * 3).map(|_| rng.random_range(0.5f32..1.0)).collect()).unwrap(),
        edges: Matrix::new(edges, 2, (0..edges * 2).map(|i| i as f32).collect()).unwrap(),
        src: (0..edges).map(|_| rng.random_range(0..nodes as u32)).collect(),
        dst: (0..edges).map(|_| rng.random_range(0..nodes as u32)).collect(),
        central: 0,
    }
}

#[test]
fn views_degenerate_cases() {
    let p = patch(6, 9, 1);
    let mut rng = Stream::root(2).rng();
    let (a, b) = make_views(&p, &ViewConfig { feature_dropout: 0.0, drop_edge: 0.0 }, &mut rng).unwrap();
    assert_eq!(a, p);
    assert_eq!(b, p);
    let (a, b) = make_views(&p, &ViewConfig { feature_dropout: 0.0, drop_edge: 1.0 }, &mut rng).unwrap();
    for v in [a, b] {
        assert_eq!(v.nodes, p.nodes);
        assert_eq!((v.edges.rows, v.src.len(), v.central), (0, 0, 0));
    }
    assert!(make_view(&p, &ViewConfig { feature_dropout: 1.0, drop_edge: 0.0 }, &mut rng).is_err());
}

#[test]
fn views_drop_edges_at_the_binomial_rate_and_differ() {
    let p = patch(50, 100_000, 3);
    let mut rng = Stream::root(4).rng();
    let (a, b) = make_views(&p, &ViewConfig::default(), &mut rng).unwrap();
    for v in [&a, &b] {
        let frac = v.src.len() as f64 / 1e5;
        assert!((frac - 0.8).abs() <= 0.005, "{frac}");
        // surviving rows keep their features and endpoints
        let e = v.edges.row(0)[0] as usize / 2;
        assert_eq!((v.src[0], v.dst[0]), (p.src[e], p.dst[e]));
        let zeros = v.nodes.data.iter().filter(|&&x| x == 0.0).count() as f64 / v.nodes.data.len() as f64;
        assert!((zeros - 0.4).abs() < 0.1, "{zeros}");
        let kept = v.nodes.data.iter().zip(&p.nodes.data).find(|(x, _)| **x != 0.0).unwrap();
        assert!((kept.0 - kept.1 / 0.6).abs() < 1e-6);
    }
    assert_ne!(a.src, b.src);
}

fn loss_of(z: &[f64], h: &[f64]) -> f64 {
    let mut tape = Tape::<f64>::new();
    let zv = tape.param(Tensor::from_vec(1, z.len(), z.to_vec()).unwrap());
    let l = bgrl_loss(&mut tape, zv, &Tensor::from_vec(1, h.len(), h.to_vec()).unwrap()).unwrap();
    tape.value(l).item()
}

#[test]
fn bgrl_loss_identities_and_bounds() {
    let h = [0.3, -1.2, 2.0];
    assert!((loss_of(&h, &h) + 2.0).abs() <= 1e-12);
    assert!((loss_of(&[-0.3, 1.2, -2.0], &h) - 2.0).abs() <= 1e-12);
    assert!(loss_of(&[1.0, 0.0, 0.0], &[0.0, 5.0, 0.0]).abs() <= 1e-15);
    assert_eq!(loss_of(&[0.0; 3], &h), 0.0);
    let mut rng = Stream::root(5).rng();
    for _ in 0..1000 {
        let z: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let l = loss_of(&z, &t);
        assert!((-2.0..=2.0).contains(&l));
    }
}

#[test]
fn bgrl_target_is_gradient_isolated() {
    let mut tape = Tape::<f64>::new();
    let z = tape.param(Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let l = bgrl_loss(&mut tape, z, &Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
    let g = tape.backward(l).unwrap();
    assert!(g.get(z).is_some());
    // the target is a constant leaf; feeding it as a trainable leaf instead
    // would have produced a gradient on it
    let target = tape.param(Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let cos = tape.cosine_similarity(z, target, 1e-12).unwrap();
    let l2 = tape.mean(cos);
    assert!(tape.backward(l2).unwrap().get(target).is_some());
    assert!(tape.backward(l).unwrap().get(target).is_none());
}

#[test]
fn ema_closed_forms() {
    let mut t = Tensor::from_vec(1, 1, vec![1.0f64]).unwrap();
    ema_update(&mut t, &Tensor::from_vec(1, 1, vec![0.0]).unwrap(), 0.999).unwrap();
    assert_eq!(t.item(), 0.999);
    let online = Tensor::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
    let mut t = Tensor::from_vec(1, 3, vec![7.0, 7.0, 7.0]).unwrap();
    ema_update(&mut t, &online, 0.0).unwrap();
    assert_eq!(t, online);
    let mut t = Tensor::from_vec(1, 1, vec![3.0f64]).unwrap();
    let target = Tensor::from_vec(1, 1, vec![1.0]).unwrap();
    for n in 1..=50 {
        ema_update(&mut t, &target, 0.9).unwrap();
        assert!((t.item() - 1.0 - 2.0 * 0.9f64.powi(n)).abs() < 1e-12);
    }
    assert!(ema_update(&mut t, &online, 0.5).is_err());
}

#[test]
fn bgrl_state_copies_encoder_and_processor_only() {
    let mut cfg = MpnnConfig::new(4, 2, 3);
    cfg.latent = 4;
    cfg.hidden = 4;
    cfg.steps = 2;
    let mut store = ParamStore::<f32>::new();
    MpnnModel::new(cfg, &mut store, &mut Stream::root(1).rng()).unwrap();
    let mut state = BgrlState::new(&store, 0.999).unwrap();
    assert!(state.ids().iter().all(|&id| store.group(id).in_target()));
    let n_target = store.ids().filter(|&id| matches!(store.group(id), ParamGroup::Encoder | ParamGroup::Processor)).count();
    assert_eq!(state.ids().len(), n_target);
    let mut tape = Tape::new();
    let bound = state.bind(&mut tape, store.len());
    let proj = store.find("proj.l0.w").unwrap();
    assert!(bound.try_var(proj).is_none());
    assert!(bound.try_var(store.find("dec.l0.w").unwrap()).is_none());

    let before = state.values().to_vec();
    let mut moved = store.clone();
    for id in moved.ids().collect::<Vec<_>>() {
        moved.get_mut(id).data_mut().iter_mut().for_each(|v| *v += 1.0);
    }
    state.ema_update(&moved).unwrap();
    for (k, &id) in state.ids().iter().enumerate() {
        for (j, &v) in state.values()[k].data().iter().enumerate() {
            let expect = 0.999f32 * before[k].data()[j] + (1.0 - 0.999) as f32 * moved.get(id).data()[j];
            assert_eq!(v, expect);
        }
    }
    assert!(BgrlState::new(&store, 1.0).is_err());
}

fn molecules(n: usize) -> Vec<Molecule> {
    synth_mol_dataset(&SynthMolConfig { count: n, ..Default::default() }, 11).unwrap()
}

#[test]
fn corruption_identity_and_topology() {
    let mols = molecules(20);
    let mut rng = Stream::root(1).rng();
    let zero = NoisyNodesConfig { p: 0.0, sigma: 0.0, ..Default::default() };
    for m in &mols {
        let (c, t) = corrupt_molecule(m, &zero, &mut rng).unwrap();
        assert_eq!(&c, m);
        assert_eq!(t, DenoiseTargets::of(m));
        let (c, t) = corrupt_molecule(m, &NoisyNodesConfig { p: 1.0, sigma: 0.3, ..Default::default() }, &mut rng).unwrap();
        assert_eq!(c.atoms.len(), m.atoms.len());
        for (a, b) in c.bonds.iter().zip(&m.bonds) {
            assert_eq!((a.a, a.b, a.ring), (b.a, b.b, b.ring));
        }
        assert!(c.atoms.iter().zip(&m.atoms).all(|(a, b)| a.charge == b.charge && a.ring == b.ring));
        assert_eq!(t.atom_types, m.atoms.iter().map(|a| a.element as usize).collect::<Vec<_>>());
        assert_ne!(c.coords, m.coords);
    }
}

#[test]
fn uniform_replacement_statistics() {
    let base = Molecule::new(
        vec![crate::molgraph::Atom { element: 1, charge: 0, ring: false }; 1000],
        vec![],
        None,
        None,
    )
    .unwrap();
    let mut rng = Stream::root(3).rng();
    let v = ATOM_VOCAB as f64;
    let mut counts = [0usize; ATOM_VOCAB];
    let all = NoisyNodesConfig { p: 1.0, ..Default::default() };
    for _ in 0..100 {
        for a in corrupt_molecule(&base, &all, &mut rng).unwrap().0.atoms {
            counts[a.element as usize] += 1;
        }
    }
    let n = 1e5;
    let sd = (n * (1.0 / v) * (1.0 - 1.0 / v)).sqrt();
    for c in counts {
        assert!((c as f64 - n / v).abs() <= 4.0 * sd, "{counts:?}");
    }
    let cfg = NoisyNodesConfig::default();
    let mut changed = 0usize;
    for _ in 0..100 {
        changed += corrupt_molecule(&base, &cfg, &mut rng).unwrap().0.atoms.iter().filter(|a| a.element != 1).count();
    }
    let q = 0.05 * (v - 1.0) / v;
    assert!((changed as f64 - n * q).abs() <= 4.0 * (n * q * (1.0 - q)).sqrt(), "{changed}");
}

fn gn_for(m: &Molecule) -> (GnModel, ParamStore<f64>) {
    let f = crate::molgraph::mol_features(m);
    let mut cfg = GnConfig::new(f.nodes.cols, f.edges.cols, ATOM_VOCAB, BOND_VOCAB);
    cfg.latent = 4;
    cfg.hidden = 4;
    cfg.steps = 1;
    cfg.activation = Activation::Tanh;
    cfg.position_heads = true;
    let mut store = ParamStore::new();
    let model = GnModel::new(cfg, &mut store, &mut Stream::root(1).rng()).unwrap();
    (model, store)
}

#[test]
fn denoise_losses_match_scalar_loops() {
    let m = &molecules(1)[0];
    let (model, store) = gn_for(m);
    let f = crate::molgraph::mol_features(m);
    let batch = crate::processors::GraphBatch::<f64>::pack(&[f.item()], 1).unwrap();
    let mut tape = Tape::new();
    let b = store.bind(&mut tape);
    let heads = model.forward(&mut tape, &b, &batch, None).unwrap();
    let t = DenoiseTargets::of(m);
    let l = denoise_losses(&mut tape, &heads, &t).unwrap();

    let ce = |logits: &Tensor<f64>, labels: &[usize]| {
        let mut s = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = logits.row(r);
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            s += -(row[y].exp() / z).ln();
        }
        s / labels.len() as f64
    };
    assert!((tape.value(l.node).item() - ce(tape.value(heads.atoms), &t.atom_types)).abs() < 1e-12);
    assert!((tape.value(l.edge).item() - ce(tape.value(heads.bonds), &t.bond_types)).abs() < 1e-12);
    let pd = tape.value(heads.displacement.unwrap());
    let td = t.displacement.as_ref().unwrap();
    let mae = pd.data().iter().zip(td.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / pd.len() as f64;
    assert!((tape.value(l.displacement.unwrap()).item() - mae).abs() < 1e-12);
    let w = NoisyNodesConfig { node_weight: 2.0, edge_weight: 0.0, displacement_weight: 1.0, distance_weight: 0.0, ..Default::default() };
    let total = l.total(&mut tape, &w).unwrap();
    assert!((tape.value(total).item() - (2.0 * tape.value(l.node).item() + mae)).abs() < 1e-12);

    // analytic extremes
    let mut tape = Tape::<f64>::new();
    let uniform = tape.constant(Tensor::zeros(3, ATOM_VOCAB));
    let perfect = tape.constant(Tensor::from_vec(1, 3, vec![0.0, 60.0, 0.0]).unwrap());
    let edges = tape.constant(Tensor::zeros(0, BOND_VOCAB));
    let fake = GnHeads { gap: uniform, atoms: uniform, bonds: edges, displacement: None, distance: None };
    let targets = DenoiseTargets { atom_types: vec![0, 4, 9], bond_types: vec![], displacement: None, distance: None };
    let l = denoise_losses(&mut tape, &fake, &targets).unwrap();
    assert!((tape.value(l.node).item() - (ATOM_VOCAB as f64).ln()).abs() < 1e-12);
    assert_eq!(tape.value(l.edge).item(), 0.0);
    assert!(l.displacement.is_none());
    let ce = tape.softmax_cross_entropy(perfect, &[1]).unwrap();
    assert!(tape.value(ce).item() < 1e-20);
}

#[test]
fn concat_targets_in_batch_order() {
    let mols = molecules(3);
    let parts: Vec<DenoiseTargets> = mols.iter().map(DenoiseTargets::of).collect();
    let all = DenoiseTargets::concat(&parts);
    assert_eq!(all.atom_types.len(), mols.iter().map(|m| m.num_atoms()).sum::<usize>());
    assert_eq!(all.displacement.as_ref().unwrap().rows(), all.bond_types.len());
    let mut no_coords = mols[0].clone();
    no_coords.coords = None;
    let mixed = DenoiseTargets::concat(&[parts[1].clone(), DenoiseTargets::of(&no_coords)]);
    assert!(mixed.displacement.is_none());
}
