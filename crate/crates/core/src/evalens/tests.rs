use proptest::prelude::*;

use super::*;
use crate::featurize::fit_pca;
use crate::hetgraph::{synth_mag, SynthMagConfig};
use crate::molgraph::{synth_mol_dataset, SynthMolConfig, ATOM_VOCAB, BOND_VOCAB, EDGE_WIDTH, NODE_WIDTH};
use crate::processors::{GnConfig, MpnnConfig};

#[test]
fn clip_fixed_points_and_nan() {
    assert_eq!(clip_gap(-0.5, "a").unwrap(), 0.0);
    assert_eq!(clip_gap(25.0, "a").unwrap(), 20.0);
    assert_eq!(clip_gap(5.3, "a").unwrap(), 5.3);
    let e = clip_gap(f64::NAN, "mol-7").unwrap_err();
    assert!(matches!(e, Error::Eval(_)) && e.to_string().contains("mol-7"));
}

proptest! {
    #[test]
    fn clip_is_idempotent_and_monotone(a in -100.0f64..100.0, b in -100.0f64..100.0) {
        let ca = clip_gap(a, "x").unwrap();
        prop_assert_eq!(clip_gap(ca, "x").unwrap(), ca);
        if a <= b {
            prop_assert!(ca <= clip_gap(b, "x").unwrap());
        }
    }
}

fn gn(edge_in: usize, seed: u64) -> (GnModel, ParamStore<f32>) {
    let mut cfg = GnConfig::new(NODE_WIDTH, edge_in, ATOM_VOCAB, BOND_VOCAB);
    cfg.latent = 8;
    cfg.hidden = 8;
    cfg.steps = 2;
    cfg.target_mean = 10.0;
    cfg.target_std = 20.0;
    let mut store = ParamStore::new();
    let m = GnModel::new(cfg, &mut store, &mut Stream::root(seed).rng()).unwrap();
    (m, store)
}

#[test]
fn fallback_routes_per_molecule() {
    let mols = synth_mol_dataset(&SynthMolConfig { count: 40, conformer_fraction: 0.5, ..Default::default() }, 3).unwrap();
    let records: Vec<MolRecord> = mols.into_iter().enumerate().map(|(i, mol)| MolRecord { id: format!("m{i}"), mol }).collect();
    let conf = gn(crate::molgraph::EDGE_WIDTH_CONFORMER, 1);
    let fall = gn(EDGE_WIDTH, 2);
    let routed = predict_with_fallback((&conf.0, &conf.1), (&fall.0, &fall.1), &records).unwrap();
    let mut saw = [false; 2];
    for (r, p) in records.iter().zip(&routed) {
        let expect = match r.mol.coords {
            Some(_) => predict_gaps(&conf.0, &conf.1, &[&r.mol]).unwrap()[0],
            None => predict_gaps(&fall.0, &fall.1, &[&r.mol]).unwrap()[0],
        };
        saw[r.mol.coords.is_some() as usize] = true;
        assert!((p - expect.clamp(0.0, 20.0)).abs() < 1e-5, "{} {p} {expect}", r.id);
    }
    assert_eq!(saw, [true, true]);
    assert!(routed.iter().all(|p| (0.0..=20.0).contains(p)));
    // the fallback model also accepts molecules that do have coordinates
    let with: Vec<&Molecule> = records.iter().filter(|r| r.mol.coords.is_some()).map(|r| &r.mol).collect();
    predict_gaps(&fall.0, &fall.1, &with).unwrap();
    let without: Vec<&Molecule> = records.iter().filter(|r| r.mol.coords.is_none()).map(|r| &r.mol).collect();
    assert!(predict_gaps(&conf.0, &conf.1, &without).is_err());
}

struct NodeSetup {
    graph: HeteroGraph,
    tables: FeatureTables,
    visible: LabelVisibility,
    model: MpnnModel,
    params: ParamStore<f32>,
}

fn node_setup(isolate: bool) -> NodeSetup {
    let cfg = SynthMagConfig { num_papers: 200, num_authors: 60, num_institutions: 6, feature_dim: 8, ..Default::default() };
    let mut graph = synth_mag(&cfg, 4).unwrap();
    if isolate {
        let mut parts = graph.to_parts();
        parts.edges.cites.retain(|&(s, d)| s != 0 && d != 0);
        parts.edges.writes.retain(|&(_, p)| p != 0);
        graph = HeteroGraph::new(parts).unwrap();
    }
    let pca = fit_pca(graph.features(), 4).unwrap();
    let tables = FeatureTables::build(&graph, &pca).unwrap();
    let visible = LabelVisibility::from_ids(graph.num_papers(), 0..100);
    let layout = crate::featurize::NodeFeatureLayout { pca_dim: 4, num_classes: graph.num_classes() };
    let mut mc = MpnnConfig::new(layout.width(), crate::featurize::EDGE_WIDTH, graph.num_classes());
    mc.latent = 8;
    mc.hidden = 8;
    mc.steps = 2;
    let mut params = ParamStore::new();
    let model = MpnnModel::new(mc, &mut params, &mut Stream::root(9).rng()).unwrap();
    NodeSetup { graph, tables, visible, model, params }
}

#[test]
fn patch_averaging_equals_replay_mean() {
    let s = node_setup(false);
    let plan = SamplingPlan::uniform(3, 3, 2, 2, 1);
    let ctx = NodeContext { graph: &s.graph, tables: &s.tables, visible: &s.visible, plan: &plan };
    let stored = per_patch_probabilities(&s.model, &s.params, &ctx, 17, 50, 5).unwrap();
    let avg = predict_node_averaged(&s.model, &s.params, &ctx, 17, 50, 5, Averaging::Probabilities).unwrap();
    for c in 0..avg.len() {
        let m = stored.iter().map(|p| p[c]).sum::<f64>() / 50.0;
        assert!((avg[c] - m).abs() < 1e-12);
    }
    assert!((avg.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert!(stored.windows(2).any(|w| w[0] != w[1]), "patches should vary");
    let one = predict_node_averaged(&s.model, &s.params, &ctx, 17, 1, 5, Averaging::Probabilities).unwrap();
    assert_eq!(one, stored[0]);
    let lg = predict_node_averaged(&s.model, &s.params, &ctx, 17, 50, 5, Averaging::Logits).unwrap();
    assert!((lg.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert!(predict_node_averaged(&s.model, &s.params, &ctx, 17, 0, 5, Averaging::Probabilities).is_err());
}

#[test]
fn isolated_node_average_equals_single_prediction() {
    let s = node_setup(true);
    let plan = SamplingPlan::default();
    let ctx = NodeContext { graph: &s.graph, tables: &s.tables, visible: &s.visible, plan: &plan };
    let single = predict_node_averaged(&s.model, &s.params, &ctx, 0, 1, 1, Averaging::Probabilities).unwrap();
    for n in [2, 7, 50] {
        let avg = predict_node_averaged(&s.model, &s.params, &ctx, 0, n, 1, Averaging::Probabilities).unwrap();
        assert_eq!(avg.iter().map(|v| (v * 1e12).round()).collect::<Vec<_>>(), single.iter().map(|v| (v * 1e12).round()).collect::<Vec<_>>());
    }
}

#[test]
fn kfold_partitions() {
    let ids: Vec<u32> = (0..100).map(|i| i * 3).collect();
    let f = kfold_split(&ids, 10, 1).unwrap();
    assert!((0..10).all(|k| f.members(k).len() == 10));
    assert_eq!(f, kfold_split(&ids, 10, 1).unwrap());
    assert_ne!(f, kfold_split(&ids, 10, 2).unwrap());
    let ids101: Vec<u32> = (0..101).collect();
    let f = kfold_split(&ids101, 10, 1).unwrap();
    let mut sizes: Vec<usize> = (0..10).map(|k| f.members(k).len()).collect();
    sizes.sort();
    assert_eq!(sizes, [vec![10; 9], vec![11]].concat());
    let mut union: Vec<u32> = (0..10).flat_map(|k| f.members(k)).collect();
    union.sort();
    assert_eq!(union, ids101);
    for id in ids101 {
        let held_out_by = (0..10).filter(|&k| !f.complement(k).contains(&id)).count();
        assert_eq!(held_out_by, 1);
        assert!(f.fold_of(id).is_some());
    }
    assert!(kfold_split(&[1, 2], 3, 0).is_err());
    assert!(kfold_split(&[1, 2], 1, 0).is_err());
}

#[test]
fn ensemble_means() {
    assert_eq!(ensemble_regression(&[vec![4.0], ]).unwrap(), vec![4.0]);
    assert_eq!(ensemble_regression(&[vec![4.0], vec![6.0]]).unwrap(), vec![5.0]);
    let spec = EnsembleSpec::default();
    assert_eq!(spec.members.len(), 20);
    let mut rng = Stream::root(3).rng();
    use rand::Rng;
    let members: Vec<Vec<Vec<f64>>> = spec
        .members
        .iter()
        .map(|_| {
            (0..30)
                .map(|_| {
                    let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..1.0)).collect();
                    let z: f64 = raw.iter().sum();
                    raw.into_iter().map(|v| v / z).collect()
                })
                .collect()
        })
        .collect();
    let mean = ensemble_probabilities(&members).unwrap();
    for i in 0..30 {
        for c in 0..4 {
            let mut s = 0.0;
            for m in &members {
                s += m[i][c];
            }
            assert!((mean[i][c] - s / 20.0).abs() < 1e-12);
        }
        assert!((mean[i].iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    assert!(ensemble_regression(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    assert!(ensemble_probabilities(&[]).is_err());
    assert!(ensemble_probabilities(&[vec![vec![0.5, 0.5]], vec![vec![1.0]]]).is_err());
}

#[test]
fn prediction_dumps_round_trip_and_single_member_identity() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![
        PredictionRow { id: "7".into(), prediction: 1.0, probs: vec![0.25, 0.5, 0.25] },
        PredictionRow { id: "9".into(), prediction: 0.0, probs: vec![0.6, 0.3, 0.1] },
    ];
    let p = dir.path().join("a.csv");
    write_predictions(&p, &rows).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("id,prediction,prob_0,prob_1,prob_2\n7,1,0.25,0.5,0.25\n"));
    let back = read_predictions(&p).unwrap();
    assert_eq!(back, rows);
    assert_eq!(ensemble_dumps(std::slice::from_ref(&back)).unwrap(), rows);
    let reg = vec![PredictionRow { id: "m".into(), prediction: 4.0, probs: vec![] }];
    let reg2 = vec![PredictionRow { id: "m".into(), prediction: 6.0, probs: vec![] }];
    assert_eq!(ensemble_dumps(&[reg.clone(), reg2]).unwrap()[0].prediction, 5.0);
    let other = vec![PredictionRow { id: "n".into(), prediction: 4.0, probs: vec![] }];
    assert!(ensemble_dumps(&[reg, other]).is_err());
    std::fs::write(&p, "id,prediction\nx,abc\n").unwrap();
    assert!(read_predictions(&p).unwrap_err().to_string().contains("line 2"));
}
