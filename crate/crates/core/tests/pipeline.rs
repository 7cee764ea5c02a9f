use patchforge::evalens::predict_gaps;
use patchforge::hetgraph::{load_dir, synth_mag, write_dir, SynthMagConfig};
use patchforge::kv::KvMap;
use patchforge::molgraph::{read_dataset, synth_mol_dataset, write_dataset, MolRecord, SynthMolConfig};
use patchforge::processors::load_checkpoint;
use patchforge::sampler::{patch_stream, sample_patch, SamplingPlan};
use patchforge::train::{train_mol, MolTrainConfig};

#[test]
fn stored_graph_samples_the_same_patches() {
    let g = synth_mag(&SynthMagConfig { num_papers: 400, duplicates: 5, ..SynthMagConfig::default() }, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dir(&g, dir.path()).unwrap();
    let back = load_dir(dir.path()).unwrap();
    assert_eq!(g, back);

    let plan = SamplingPlan::uniform(4, 4, 2, 3, 1);
    for center in (0..400).step_by(37) {
        let a = sample_patch(&g, center, &plan, &mut patch_stream(5, 0, center).rng()).unwrap();
        let b = sample_patch(&back, center, &plan, &mut patch_stream(5, 0, center).rng()).unwrap();
        assert_eq!(a, b);
        assert!(a.nodes.len() <= plan.max_nodes());
    }
}

#[test]
fn trained_checkpoint_reproduces_best_parameters() {
    let mols = synth_mol_dataset(&SynthMolConfig { count: 60, max_atoms: 10, ..SynthMolConfig::default() }, 2).unwrap();
    let records: Vec<MolRecord> = mols.into_iter().enumerate().map(|(i, mol)| MolRecord { id: format!("m{i}"), mol }).collect();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("mols.tsv");
    write_dataset(&data, &records).unwrap();
    let records = read_dataset(&data).unwrap();
    let (train, valid) = records.split_at(48);

    let kv = KvMap::parse("steps = 12\neval_every = 6\nmodel.latent = 8\nmodel.hidden = 8\nmodel.steps = 2\n").unwrap();
    let cfg = MolTrainConfig::from_kv(&kv).unwrap();
    let run_dir = dir.path().join("run");
    std::fs::create_dir(&run_dir).unwrap();
    let run = train_mol(&cfg, train, valid, Some(&run_dir), None).unwrap();
    assert_eq!(run.steps_run, 12);

    let (model, params) = load_checkpoint(&run_dir.join("checkpoint")).unwrap().gn().unwrap();
    let mols: Vec<_> = valid.iter().map(|r| &r.mol).collect();
    let from_disk = predict_gaps(&model, &params, &mols).unwrap();
    let in_memory = predict_gaps(&run.model, &run.best_params, &mols).unwrap();
    assert_eq!(from_disk, in_memory);
    assert!(from_disk.iter().all(|p| p.is_finite()));
}
