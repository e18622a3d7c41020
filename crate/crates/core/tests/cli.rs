//! End-to-end runs of the command-line interface on small CSV files.

use std::fmt::Write as _;
use std::path::Path;

use lcn::cli::{run_with_io, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("lcn").chain(args.iter().copied());
    let code = run_with_io(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Classification rows with a split column, plus a regression target.
fn write_csv(dir: &Path) -> std::path::PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut text = String::from("a,b,c,y,r,split\n");
    for i in 0..240 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = u8::from(x[0] - 0.5 * x[1] >= 0.1);
        let r = 2.0 * f64::from(x[2] > 0.0) + x[0];
        let split = ["train", "train", "train", "val", "test"][i % 5];
        writeln!(text, "{},{},{},{y},{r},{split}", x[0], x[1], x[2]).unwrap();
    }
    let p = dir.join("data.csv");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn train_predict_eval_convert_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path());
    let model = dir.path().join("model.json");
    let (code, out, err) = run(&[
        "train", "--data", path(&data), "--labels", "y", "--split-column", "split", "--depth", "3",
        "--epochs", "3", "--standardize", "--out", path(&model),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("validation AUC"), "{out}");
    assert!(err.contains("learning_rate = 0.1") && err.contains("batch_size = 64") && err.contains("lr_decay_every = 10"), "{err}");
    assert!(dir.path().join("model.metrics.csv").exists());

    let (code, out, _) = run(&["predict", "--model", path(&model), "--data", path(&data)]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 241);
    assert_eq!(out.lines().next(), Some("y"));

    let (code, out, err) = run(&["eval", "--model", path(&model), "--data", path(&data), "--split-column", "split", "--subset", "test"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("y,auc,"), "{out}");

    let tree = dir.path().join("tree.json");
    let (code, out, err) = run(&["convert", "--model", path(&model), "--out", path(&tree)]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("8 leaves"), "{out}");

    // Tree predictions equal network predictions on every row.
    let (_, by_model, _) = run(&["predict", "--model", path(&model), "--data", path(&data)]);
    let (_, by_tree, _) = run(&["predict", "--model", path(&tree), "--data", path(&data)]);
    assert_eq!(by_model, by_tree);

    let rebuilt = dir.path().join("rebuilt.json");
    let (code, _, err) = run(&["tree-to-lcn", "--tree", path(&tree), "--out", path(&rebuilt)]);
    assert_eq!(code, EXIT_OK, "{err}");

    let (code, dot, _) = run(&["export-dot", "--tree", path(&tree), "--top-k", "2"]);
    assert_eq!(code, EXIT_OK);
    assert!(dot.starts_with("digraph") && dot.contains("rank 1/8"), "{dot}");

    let report = dir.path().join("report.json");
    let (code, out, _) = run(&[
        "verify", "--suite", "auc", "--model", path(&model), "--tree", path(&tree), "--data", path(&data),
        "--out", path(&report),
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.contains("PASS model_vs_tree_file"), "{out}");
    assert!(report.exists());
}

#[test]
fn ensemble_writes_manifest_and_predicts() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path());
    let ens = dir.path().join("ens");
    let (code, out, err) = run(&[
        "train-ensemble", "--data", path(&data), "--labels", "r", "--split-column", "split", "--task",
        "regression", "--ensemble-size", "3", "--epochs", "2", "--depth", "4", "--lr", "0.01",
        "--out", path(&ens),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(out.matches("stage ").count(), 3, "{out}");
    assert!(err.contains("ensemble_size = 3") && err.contains("depth = 4"), "{err}");
    for f in ["manifest.json", "component_0001.json", "component_0003.json", "metrics.csv"] {
        assert!(ens.join(f).exists(), "{f}");
    }
    let manifest = ens.join("manifest.json");
    let (code, out, _) = run(&["eval", "--model", path(&manifest), "--data", path(&data)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("r,rmse,"), "{out}");
}

#[test]
fn ensemble_depth_defaults_to_twelve() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path());
    let (code, _, err) = run(&[
        "train-ensemble", "--data", path(&data), "--labels", "y", "--split-column", "split",
        "--ensemble-size", "1", "--epochs", "1", "--out", path(&dir.path().join("e")),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(err.contains("depth = 12") && err.contains("variant = \"alcn\""), "{err}");
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path());
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "epochs = 2\nlr = 0.05\ndepth = 5\n").unwrap();
    let (code, _, err) = run(&[
        "train", "--data", path(&data), "--labels", "y", "--split-column", "split", "--config", path(&cfg),
        "--depth", "2", "--out", path(&dir.path().join("m.json")),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(err.contains("depth = 2") && err.contains("learning_rate = 0.05") && err.contains("epochs = 2"), "{err}");

    std::fs::write(&cfg, "epoch = 2\n").unwrap();
    let (code, _, err) = run(&[
        "train", "--data", path(&data), "--labels", "y", "--split-column", "split", "--config", path(&cfg), "--out", path(&dir.path().join("m.json")),
    ]);
    assert_eq!(code, EXIT_USAGE, "{err}");
}

#[test]
fn errors_map_to_exit_codes_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path());
    let out = dir.path().join("m.json");

    let (code, _, err) = run(&["train", "--labels", "y", "--out", path(&out)]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("--data"));

    let (code, _, err) = run(&["train", "--data", path(&dir.path().join("missing.csv")), "--labels", "y", "--out", path(&out)]);
    assert_eq!(code, EXIT_DATA, "{err}");

    let (code, _, err) = run(&["train", "--data", path(&data), "--labels", "nope", "--out", path(&out)]);
    assert_eq!(code, EXIT_DATA, "{err}");
    assert!(err.contains("nope"), "{err}");

    let (code, _, _) = run(&["train", "--data", path(&data), "--labels", "y", "--split-column", "split", "--dropconnect", "1.5", "--out", path(&out)]);
    assert_eq!(code, EXIT_USAGE);

    let (code, _, _) = run(&["train", "--data", path(&data), "--labels", "y", "--split-column", "split", "--variant", "lln", "--ensemble-size", "2", "--out", path(&out)]);
    assert_eq!(code, EXIT_USAGE);
    assert!(!out.exists());

    let (code, _, _) = run(&["verify", "--suite", "nope"]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn identical_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path());
    let files: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("m{i}.json"));
            let (code, _, err) = run(&[
                "train", "--data", path(&data), "--labels", "y", "--split-column", "split", "--epochs", "2", "--seed", "4",
                "--dropconnect", "0.25", "--threads", "2", "--out", path(&out),
            ]);
            assert_eq!(code, EXIT_OK, "{err}");
            std::fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(files[0], files[1]);
}
