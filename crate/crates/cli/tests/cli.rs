mod common;

use std::collections::BTreeMap;

use common::*;
use hkg_cli::commands::{self, eval_model};
use hkg_cli::pipeline;
use hkg_cli::{CliError, FeatureFiles, RunConfig};
use hkg_core::datagen::Split;
use hkg_core::model::{HeadKind, InputKind};
use hkg_core::{HkgError, HkgModel};

#[test]
fn gen_data_writes_four_leaves_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = commands::gen_data(None, &dir.path().join("d"), Some(3)).unwrap();
    assert_eq!(manifest.classes.len(), 4);
    assert_eq!(manifest.seed, 3);
    assert!(dir.path().join("d/manifest.json").is_file());
    for split in ["train", "val", "test"] {
        assert_eq!(
            std::fs::read_dir(dir.path().join("d").join(split))
                .unwrap()
                .count(),
            4
        );
    }
}

#[test]
fn gen_data_missing_spec_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["gen-data", "--spec", "nope.json", "--out", "d"],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nope.json"), "{}", stderr(&out));
}

#[test]
fn gen_data_same_seed_gives_identical_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, serde_json::to_string(&small_spec(1)).unwrap()).unwrap();
    for d in ["a", "b"] {
        let out = run(
            &["gen-data", "--spec", "spec.json", "--out", d, "--seed", "5"],
            dir.path(),
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let a = std::fs::read(dir.path().join("a/manifest.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/manifest.json")).unwrap();
    assert_eq!(a, b);
}

fn table_counts() -> BTreeMap<String, u64> {
    [
        ("choked flow cavitation", 72),
        ("constant cavitation", 93),
        ("incipient cavitation", 40),
        ("non-cavitation", 151),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect()
}

fn csv_rows(path: &std::path::Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let lines = read_lines(path);
    let header = lines[0].split(',').map(str::to_owned).collect();
    let rows = lines[1..]
        .iter()
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn build_matrices_writes_scm_from_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        class_counts: Some(table_counts()),
        ..RunConfig::default()
    };
    write_config(&dir.path().join("c.json"), &cfg);
    let out = run(
        &["build-matrices", "--config", "c.json", "--out", "m"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    for name in ["scm", "transition", "hkcm", "bhkcm", "rehkcm"] {
        assert!(dir.path().join(format!("m/{name}.csv")).is_file(), "{name}");
    }
    assert!(dir.path().join("m/run.json").is_file());
    let (header, a) = csv_rows(&dir.path().join("m/scm.csv"));
    let cho = header
        .iter()
        .position(|h| h == "choked flow cavitation")
        .unwrap();
    let con = header
        .iter()
        .position(|h| h == "constant cavitation")
        .unwrap();
    assert!((a[cho][con] - 0.43636).abs() < 1e-5);
}

#[test]
fn build_matrices_zero_eta_gives_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        class_counts: Some(table_counts()),
        eta: 0.0,
        ..RunConfig::default()
    };
    commands::build_matrices(&cfg, dir.path()).unwrap();
    let (_, m) = csv_rows(&dir.path().join("rehkcm.csv"));
    for (i, row) in m.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            assert_eq!(x, if i == j { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn zero_tau_rejected_at_parse_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"tau": 0.0}"#).unwrap();
    let out = run(
        &["build-matrices", "--config", "c.json", "--out", "m"],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("`tau`"), "{}", stderr(&out));
    let out = run(
        &["build-matrices", "--set", "tau=0", "--out", "m"],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn invariant_failures_map_to_exit_3() {
    let e = CliError::Invariant("x".into());
    assert_eq!(e.exit_code(), 3);
    assert_eq!(
        CliError::from(HkgError::Divergence("d".into())).exit_code(),
        4
    );
    assert_eq!(
        CliError::from(HkgError::TreeMismatch("t".into())).exit_code(),
        5
    );
    assert_eq!(CliError::from(HkgError::Config("c".into())).exit_code(), 2);
    assert_eq!(CliError::from(HkgError::Numeric("n".into())).exit_code(), 1);
}

#[test]
fn train_smoke_then_resume_continues_epochs() {
    let (dir, _) = small_setup();
    let out = run(
        &[
            "train",
            "--config",
            "config.json",
            "--epochs",
            "1",
            "--batch",
            "16",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let history = dir.path().join("run/history.jsonl");
    assert_eq!(read_lines(&history).len(), 1);
    assert!(dir.path().join("run/run.json").is_file());
    assert!(dir.path().join("run/matrices/rehkcm.csv").is_file());

    let ckpt = "run/checkpoints/epoch_0001.hkg";
    let out = run(
        &[
            "train",
            "--config",
            "config.json",
            "--epochs",
            "3",
            "--resume",
            ckpt,
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let lines = read_lines(&history);
    assert_eq!(lines.len(), 3);
    let last: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
    assert_eq!(last["epoch"], 3);
    assert!(dir.path().join("run/checkpoints/epoch_0003.hkg").is_file());
}

#[test]
fn divergence_exits_4_naming_checkpoint() {
    let (dir, _) = small_setup();
    let out = run(
        &[
            "train",
            "--config",
            "config.json",
            "--set",
            "lr=1e6",
            "--set",
            "momentum=0",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(
        stderr(&out).contains("last good checkpoint"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn ablation_runs_one_sub_run_per_value() {
    let (dir, cfg_path) = small_setup();
    let mut cfg = RunConfig::from_file(&cfg_path).unwrap();
    cfg.epochs = 1;
    write_config(&cfg_path, &cfg);
    let out = run(
        &[
            "train",
            "--config",
            "config.json",
            "--ablate",
            "tau=0.1,0.3,0.5",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = read_lines(&dir.path().join("run/ablation.tsv"));
    assert_eq!(table.len(), 4);
    for (line, v) in table[1..].iter().zip(["0.1", "0.3", "0.5"]) {
        assert!(line.starts_with(&format!("tau\t{v}\t")), "{line}");
    }
    for v in ["0.1", "0.3", "0.5"] {
        let sub = dir.path().join(format!("run/ablate/tau={v}/seed_7"));
        assert!(sub.join("history.jsonl").is_file());
        assert!(sub.join("eval/report.json").is_file());
        let echoed = RunConfig::from_file(&sub.join("run.json")).unwrap();
        assert_eq!(echoed.tau.to_string(), v);
    }
}

#[test]
fn eval_writes_reports_without_training_data() {
    let (dir, _) = small_setup();
    let out = run(
        &["train", "--config", "config.json", "--head", "linear"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    std::fs::remove_dir_all(dir.path().join("data/train")).unwrap();
    let out = run(
        &[
            "eval",
            "--config",
            "config.json",
            "--checkpoint",
            "run/checkpoints/epoch_0002.hkg",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let eval = dir.path().join("run/eval");
    for f in [
        "report.json",
        "report.txt",
        "confusion.csv",
        "roc.csv",
        "thresholds.json",
        "run.json",
    ] {
        assert!(eval.join(f).is_file(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    assert!(report["macro"]["f1"].is_number());
    assert_eq!(report["per_leaf"].as_array().unwrap().len(), 4);
}

#[test]
fn eval_tree_mismatch_exits_5() {
    let (dir, cfg_path) = small_setup();
    let out = run(
        &["train", "--config", "config.json", "--epochs", "1"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let tree = r#"[{"name":"root","parent":null},{"name":"a","parent":"root"},{"name":"b","parent":"root"}]"#;
    std::fs::write(dir.path().join("tree.json"), tree).unwrap();
    let mut cfg = RunConfig::from_file(&cfg_path).unwrap();
    cfg.tree = Some(dir.path().join("tree.json"));
    write_config(&dir.path().join("other.json"), &cfg);
    let out = run(
        &[
            "eval",
            "--config",
            "other.json",
            "--checkpoint",
            "run/checkpoints/epoch_0001.hkg",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 5, "{}", stderr(&out));
}

#[test]
fn untrained_model_is_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_small_dataset(dir.path(), 4);
    let cfg = small_config(&data, &dir.path().join("run"));
    let tree = pipeline::load_tree(&cfg).unwrap();
    let emb = pipeline::load_embeddings(&cfg, &tree).unwrap();
    let m = pipeline::build_matrices(&cfg, &tree).unwrap();
    let input = InputKind::Spectrogram {
        height: 16,
        width: 16,
    };
    let mut accs = Vec::new();
    for seed in 0..5 {
        let model = HkgModel::new(cfg.model_config(input), &emb, &m.rehkcm, seed).unwrap();
        let report = eval_model(&cfg, &tree, &model, &dir.path().join(format!("e{seed}"))).unwrap();
        accs.push(report.leaf_accuracy);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.25).abs() <= 0.10, "{accs:?}");
}

#[test]
fn exported_features_train_a_feature_model() {
    let (dir, cfg_path) = small_setup();
    let out = run(
        &["train", "--config", "config.json", "--export-features"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let fdir = dir.path().join("run/features");
    let mut cfg = RunConfig::from_file(&cfg_path).unwrap();
    cfg.features = Some(FeatureFiles {
        train: fdir.join("train.csv"),
        val: fdir.join("val.csv"),
        test: fdir.join("test.csv"),
    });
    cfg.out_dir = dir.path().join("frun");
    let tree = pipeline::load_tree(&cfg).unwrap();
    let train = pipeline::load_split(&cfg, &tree, Split::Train).unwrap();
    assert_eq!(train.kind, InputKind::Features { dim: 64 });
    assert_eq!(train.len(), 4 * 3 * 3);
    for head in [HeadKind::Gcn, HeadKind::Linear] {
        cfg.head = head;
        let report = commands::train_run(&cfg, None, false).unwrap();
        assert_eq!(report.history.len(), 2);
        let ckpt = report.last_checkpoint.unwrap();
        commands::eval_run(&cfg, &ckpt, &cfg.out_dir.join("eval")).unwrap();
    }
}
