use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const NODE_CFG: &str = "steps = 30\neval_every = 15\neval_patches = 2\neval_limit = 30\nmodel.latent = 8\nmodel.hidden = 8\n\
caps.nodes = 2000\ncaps.edges = 4000\ncaps.graphs = 8\nlr.peak = 0.003\nlr.warmup = 3\nlr.total = 30\n\
plan.depth1.cited = 3\nplan.depth1.citing = 3\nplan.depth1.authors = 2\nplan.depth2.cited = 2\nplan.depth2.citing = 2\n\
plan.depth2.authors = 1\nplan.depth2.papers = 2\nplan.depth2.institutions = 1\n";

const MOL_CFG: &str = "steps = 20\neval_every = 10\nmodel.latent = 8\nmodel.hidden = 8\nmodel.steps = 2\n\
caps.nodes = 256\ncaps.edges = 512\ncaps.graphs = 16\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchforge")).args(args).current_dir(dir).env("RUST_LOG", "warn").output().expect("spawn patchforge")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "patchforge {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Last stderr line, which carries the error record.
fn error_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or_default().to_string()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap()).map(|e| (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())).collect();
    v.sort();
    v
}

fn manifest(dir: &Path) -> String {
    fs::read_to_string(dir.join("run.manifest")).unwrap()
}

#[test]
fn synth_mag_reruns_are_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(t.path(), &["synth-mag", "--papers", "1000", "--seed", "7", "--out", out, "--deterministic"]);
    }
    let (a, b) = (files(&t.path().join("a")), files(&t.path().join("b")));
    assert!(a.iter().any(|(n, _)| n == "run.manifest"));
    assert_eq!(a, b);

    ok(t.path(), &["synth-mag", "--papers", "1000", "--seed", "7", "--out", "c"]);
    let data = |v: Vec<(String, Vec<u8>)>| v.into_iter().filter(|(n, _)| n != "run.manifest").collect::<Vec<_>>();
    assert_eq!(data(a), data(files(&t.path().join("c"))));
    ok(t.path(), &["synth-mag", "--papers", "1000", "--seed", "8", "--out", "d"]);
    assert_ne!(fs::read(t.path().join("c/edges_cites.tsv")).unwrap(), fs::read(t.path().join("d/edges_cites.tsv")).unwrap());
}

#[test]
fn deterministic_manifest_has_zero_timestamps() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["synth-mol", "--count", "20", "--out", "m", "--deterministic"]);
    let m = manifest(&t.path().join("m"));
    for line in ["command = synth-mol", "start = 0", "end = 0", "outputs = train.tsv,valid.tsv", "config.count = 20"] {
        assert!(m.lines().any(|l| l == line), "missing '{line}' in\n{m}");
    }
}

#[test]
fn unknown_config_keys_are_listed() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["synth-mol", "--count", "30", "--out", "m"]);
    fs::write(t.path().join("bad.cfg"), "steps = 5\nbogus = 1\nmodel.nope = 2\n").unwrap();
    let out = run(t.path(), &["train-mol", "--train", "m/train.tsv", "--valid", "m/valid.tsv", "--config", "bad.cfg", "--out", "r"]);
    assert_eq!(out.status.code(), Some(1));
    let line = error_line(&out);
    assert!(line.starts_with("error[config]: "), "{line}");
    assert!(line.contains("bogus") && line.contains("model.nope"), "{line}");
}

#[test]
fn missing_file_names_the_path() {
    let t = tempfile::tempdir().unwrap();
    let out = run(t.path(), &["fit-pca", "--graph", "no/such/graph", "--out", "p"]);
    assert_eq!(out.status.code(), Some(1));
    let line = error_line(&out);
    assert!(line.starts_with("error[io]: ") && line.contains("no/such/graph"), "{line}");
}

#[test]
fn usage_errors_exit_with_two() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(run(t.path(), &["train-node"]).status.code(), Some(2));
    assert_eq!(run(t.path(), &["no-such-command"]).status.code(), Some(2));
}

#[test]
fn gradcheck_reports_every_family() {
    let t = tempfile::tempdir().unwrap();
    let out = ok(t.path(), &["gradcheck"]);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "family,max_rel_error,checked");
    for fam in ["matmul", "layer_norm", "mpnn", "gn"] {
        let row = rows.iter().find(|r| r.starts_with(&format!("{fam},"))).unwrap_or_else(|| panic!("no {fam} row"));
        let err: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(err <= 1e-4, "{row}");
    }
}

#[test]
fn bench_sampler_emits_records() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["synth-mag", "--papers", "300", "--out", "g"]);
    fs::write(t.path().join("plan.txt"), "depth1.cited = 5\ndepth1.citing = 5\n").unwrap();
    let out = ok(t.path(), &["bench-sampler", "--graph", "g", "--plan", "plan.txt", "--seconds", "0.2"]);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "record,key,value");
    assert!(rows.iter().any(|r| r.starts_with("rate,patches_per_sec,")));
    let hist: usize = rows.iter().filter(|r| r.starts_with("nodes,")).map(|r| r.split(',').nth(2).unwrap().parse::<usize>().unwrap()).sum();
    let patches: usize = rows.iter().find(|r| r.starts_with("rate,patches,")).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(hist, patches);
}

#[test]
fn node_pipeline_with_folds_and_ensemble() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    fs::write(d.join("node.cfg"), NODE_CFG).unwrap();
    ok(d, &["synth-mag", "--papers", "600", "--seed", "3", "--out", "g"]);
    ok(d, &["fit-pca", "--graph", "g", "--dim", "6", "--out", "pca"]);
    ok(d, &["kfold", "--graph", "g", "--k", "3", "--out", "folds"]);
    let folds = fs::read_to_string(d.join("folds/folds.csv")).unwrap();
    assert_eq!(folds.lines().next(), Some("id,fold"));

    let mut members = String::new();
    for seed in ["1", "2"] {
        let (run_dir, eval_dir) = (format!("run{seed}"), format!("eval{seed}"));
        ok(d, &["train-node", "--graph", "g", "--pca", "pca", "--config", "node.cfg", "--folds", "folds/folds.csv", "--fold", "0", "--seed", seed, "--out", &run_dir]);
        let rd = d.join(&run_dir);
        for f in ["config.txt", "metrics.csv", "checkpoint", "run.manifest"] {
            assert!(rd.join(f).exists(), "{run_dir} lacks {f}");
        }
        assert!(manifest(&rd).contains("config.fold = 0"));
        ok(d, &["eval-node", "--run", &run_dir, "--graph", "g", "--pca", "pca", "--folds", "folds/folds.csv", "--fold", "0", "--patches", "2", "--out", &eval_dir]);
        members.push_str(&format!("{eval_dir}/predictions.csv\n"));
    }
    let held = folds.lines().skip(1).filter(|l| l.ends_with(",0")).count();
    let preds = fs::read_to_string(d.join("eval1/predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), held + 1);
    assert!(preds.lines().next().unwrap().starts_with("id,prediction,prob_0"));

    fs::write(d.join("members.txt"), members).unwrap();
    ok(d, &["ensemble", "--members", "members.txt", "--out", "ens"]);
    let ens = fs::read_to_string(d.join("ens/predictions.csv")).unwrap();
    assert_eq!(ens.lines().count(), held + 1);
    for row in ens.lines().skip(1) {
        let p: Vec<f64> = row.split(',').skip(2).map(|x| x.parse().unwrap()).collect();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{row}");
    }

    fs::write(d.join("one.txt"), "eval1/predictions.csv\n").unwrap();
    ok(d, &["ensemble", "--members", "one.txt", "--out", "single"]);
    assert_eq!(fs::read(d.join("single/predictions.csv")).unwrap(), fs::read(d.join("eval1/predictions.csv")).unwrap());
}

#[test]
fn mol_pipeline_with_fallback() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    fs::write(d.join("mol.cfg"), MOL_CFG).unwrap();
    ok(d, &["synth-mol", "--count", "120", "--conformer-fraction", "0.6", "--seed", "4", "--out", "m"]);
    ok(d, &["train-mol", "--train", "m/train.tsv", "--valid", "m/valid.tsv", "--config", "mol.cfg", "--out", "conf"]);
    ok(d, &["train-mol", "--train", "m/train.tsv", "--valid", "m/valid.tsv", "--config", "mol.cfg", "--set", "conformer=false", "--out", "plain"]);
    assert!(manifest(&d.join("conf")).lines().any(|l| l.starts_with("result.skipped_without_coords = ") && !l.ends_with(" 0")));

    let out = run(d, &["eval-mol", "--run", "conf", "--data", "m/valid.tsv", "--out", "e0"]);
    assert!(error_line(&out).starts_with("error[input]: "), "{}", error_line(&out));

    let stdout = ok(d, &["eval-mol", "--run", "conf", "--fallback", "plain", "--data", "m/valid.tsv", "--out", "e"]);
    assert!(stdout.starts_with("MAE "), "{stdout}");
    let clipped = fs::read_to_string(d.join("e/predictions.csv")).unwrap();
    let raw = fs::read_to_string(d.join("e/raw_predictions.csv")).unwrap();
    assert_eq!(clipped.lines().count(), 13);
    for (c, r) in clipped.lines().zip(raw.lines()).skip(1) {
        let c: f64 = c.split(',').nth(1).unwrap().parse().unwrap();
        let r: f64 = r.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(c, r.clamp(0.0, 20.0));
    }
}

#[test]
fn mol_folds_move_validation_records_into_training() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    fs::write(d.join("mol.cfg"), MOL_CFG).unwrap();
    ok(d, &["synth-mol", "--count", "100", "--out", "m"]);
    ok(d, &["kfold", "--data", "m/valid.tsv", "--k", "2", "--out", "f"]);
    ok(d, &["train-mol", "--train", "m/train.tsv", "--valid", "m/valid.tsv", "--config", "mol.cfg", "--folds", "f/folds.csv", "--fold", "1", "--out", "r"]);
    let out = run(d, &["train-mol", "--train", "m/train.tsv", "--valid", "m/valid.tsv", "--config", "mol.cfg", "--folds", "f/folds.csv", "--fold", "5", "--out", "r2"]);
    assert!(error_line(&out).starts_with("error[input]: "), "{}", error_line(&out));
}

#[test]
fn data_dir_variable_resolves_relative_paths() {
    let root = tempfile::tempdir().unwrap();
    let cwd = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_patchforge"))
        .args(["synth-mol", "--count", "10", "--out", "mols"])
        .current_dir(cwd.path())
        .env("PATCHFORGE_DATA_DIR", root.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(root.path().join("mols/train.tsv").exists());
    assert!(!cwd.path().join("mols").exists());
}
