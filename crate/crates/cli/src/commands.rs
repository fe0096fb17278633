//! One function per subcommand. Each writes its artifacts under an output
//! directory together with a `run.json` echo of the resolved configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use hkg_core::autodiff::{sigmoid, Checkpoint};
use hkg_core::datagen::{make_dataset, Manifest, Split, SyntheticSpec};
use hkg_core::hierarchy::{label_vector, InvariantCheck};
use hkg_core::metrics::{fit_thresholds, roc_csv, EvalRecord, MetricsReport};
use hkg_core::model::{export_features, score_dataset, train, Dataset, FeatureRecord, TrainReport};
use hkg_core::{HkgError, HkgModel, LabelTree, Result};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline;

pub const RUN_FILE: &str = "run.json";
pub const MATRIX_DIR: &str = "matrices";
pub const EVAL_DIR: &str = "eval";
pub const FEATURE_DIR: &str = "features";
const SCORE_BATCH: usize = 64;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HkgError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| HkgError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

pub fn write_run_file(cfg: &RunConfig, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join(RUN_FILE), cfg)
}

pub fn gen_data(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> CliResult<Manifest> {
    let mut spec = match spec {
        Some(p) => SyntheticSpec::from_json_file(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    Ok(make_dataset(&spec, out)?)
}

/// Build the five matrices from the training split, write them as CSV and
/// return the invariant checks. Any failed check is an error.
pub fn build_matrices(cfg: &RunConfig, out: &Path) -> CliResult<Vec<InvariantCheck>> {
    write_run_file(cfg, out)?;
    let tree = pipeline::load_tree(cfg)?;
    let matrices = pipeline::build_matrices(cfg, &tree)?;
    matrices.write_csvs(out)?;
    let checks = matrices.check_invariants(&tree);
    write_json(&out.join("invariants.json"), &checks)?;
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    if failed.is_empty() {
        Ok(checks)
    } else {
        Err(CliError::Invariant(failed.join("; ")))
    }
}

/// Train a model under `cfg.out_dir`, optionally resuming from a checkpoint.
pub fn train_run(cfg: &RunConfig, resume: Option<&Path>, export: bool) -> CliResult<TrainReport> {
    let out = &cfg.out_dir;
    write_run_file(cfg, out)?;
    let tree = pipeline::load_tree(cfg)?;
    let embeddings = pipeline::load_embeddings(cfg, &tree)?;
    let matrices = pipeline::build_matrices(cfg, &tree)?;
    matrices.write_csvs(&out.join(MATRIX_DIR))?;

    let train_set = pipeline::load_split(cfg, &tree, Split::Train)?;
    let val_set = pipeline::load_split(cfg, &tree, Split::Val)?;
    log::info!(
        "train {} examples, val {} examples",
        train_set.len(),
        val_set.len()
    );

    let model_config = cfg.model_config(train_set.kind);
    let mut model = HkgModel::new(model_config, &embeddings, &matrices.rehkcm, cfg.seed)?;
    let report = train(
        &mut model,
        &tree,
        &train_set,
        &val_set,
        &cfg.train_config(),
        Some(out),
        resume,
    )?;

    if export {
        let dir = out.join(FEATURE_DIR);
        create_dir(&dir)?;
        let test_set = pipeline::load_split(cfg, &tree, Split::Test)?;
        for (name, data) in [
            ("train", &train_set),
            ("val", &val_set),
            ("test", &test_set),
        ] {
            export_features(
                &dir.join(format!("{name}.csv")),
                &feature_records(&model, &tree, data)?,
            )?;
        }
    }
    Ok(report)
}

fn feature_records(
    model: &HkgModel,
    tree: &LabelTree,
    data: &Dataset,
) -> Result<Vec<FeatureRecord>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(SCORE_BATCH) {
        let f = model.feature_forward(&data.batch(chunk))?;
        let d = f.shape[1];
        for (row, &i) in f.data.chunks(d).zip(chunk) {
            out.push(FeatureRecord {
                features: row.to_vec(),
                label: tree.name(data.examples[i].leaf).to_owned(),
            });
        }
    }
    Ok(out)
}

/// Sigmoid probabilities and multi-hot truth for every example.
pub fn eval_records(model: &HkgModel, tree: &LabelTree, data: &Dataset) -> Result<Vec<EvalRecord>> {
    let scores = score_dataset(model, data, SCORE_BATCH)?;
    scores
        .into_iter()
        .zip(&data.examples)
        .map(|(s, ex)| {
            Ok(EvalRecord {
                probs: s.into_iter().map(sigmoid).collect(),
                truth: label_vector(tree, ex.leaf)?,
                leaf_truth: ex.leaf,
            })
        })
        .collect()
}

/// Thresholds from the validation split, metrics on the test split. Writes
/// `report.json`, `report.txt`, `confusion.csv`, `roc.csv` and
/// `thresholds.json` into `out`.
pub fn eval_model(
    cfg: &RunConfig,
    tree: &LabelTree,
    model: &HkgModel,
    out: &Path,
) -> CliResult<MetricsReport> {
    model.check_node_order(&tree.class_names())?;
    write_run_file(cfg, out)?;
    let val_set = pipeline::load_split(cfg, tree, Split::Val)?;
    let test_set = pipeline::load_split(cfg, tree, Split::Test)?;
    for data in [&val_set, &test_set] {
        if data.kind != model.config.input {
            return Err(HkgError::Config(format!(
                "split input {:?} does not match checkpoint input {:?}",
                data.kind, model.config.input
            ))
            .into());
        }
    }
    let thresholds = fit_thresholds(tree, &eval_records(model, tree, &val_set)?)?;
    let test = eval_records(model, tree, &test_set)?;
    let report = MetricsReport::build(tree, &test, &thresholds)?;

    write_json(&out.join("report.json"), &report)?;
    write_file(&out.join("report.txt"), report.to_text_table())?;
    write_file(&out.join("confusion.csv"), report.confusion_csv())?;
    write_file(&out.join("roc.csv"), roc_csv(tree, &test)?)?;
    let named: Vec<(String, String)> = tree
        .class_names()
        .into_iter()
        .zip(&thresholds)
        .map(|(n, t)| (n, t.to_string()))
        .collect();
    write_json(&out.join("thresholds.json"), &named)?;
    Ok(report)
}

pub fn eval_run(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> CliResult<MetricsReport> {
    let tree = pipeline::load_tree(cfg)?;
    let model = HkgModel::read_from(&Checkpoint::load(checkpoint)?)?;
    eval_model(cfg, &tree, &model, out)
}

/// One sub-run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRun {
    pub value: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub final_val_loss: f64,
    pub val_leaf_accuracy: f64,
    pub test_leaf_accuracy: f64,
    pub test_macro_f1: f64,
}

/// Seed-averaged results for one swept value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub key: String,
    pub value: String,
    pub seeds: Vec<u64>,
    pub mean_test_leaf_accuracy: f64,
    pub mean_test_macro_f1: f64,
    pub runs: Vec<AblationRun>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Parse `key=v1,v2,...`.
pub fn parse_sweep(spec: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| HkgError::Config(format!("sweep {spec:?} must look like key=v1,v2")))?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_owned())
        .filter(|v| !v.is_empty())
        .collect();
    if key.trim().is_empty() || values.is_empty() {
        return Err(HkgError::Config(format!(
            "sweep {spec:?} must look like key=v1,v2"
        )));
    }
    Ok((key.trim().to_owned(), values))
}

/// Train and evaluate once per (value, seed); write `ablation.json` and
/// `ablation.tsv` under `cfg.out_dir`.
pub fn ablate(
    cfg: &RunConfig,
    key: &str,
    values: &[String],
    seeds: &[u64],
) -> CliResult<Vec<AblationRow>> {
    let mut resolved = Vec::with_capacity(values.len());
    for v in values {
        let mut c = cfg.clone();
        c.set(key, v)?;
        resolved.push((v.clone(), c));
    }
    let mut rows = Vec::new();
    for (value, base) in resolved {
        let mut runs = Vec::new();
        for &seed in seeds {
            let mut c = base.clone();
            c.seed = seed;
            c.out_dir = cfg
                .out_dir
                .join("ablate")
                .join(format!("{key}={value}"))
                .join(format!("seed_{seed}"));
            log::info!("sweep {key}={value} seed {seed} -> {}", c.out_dir.display());
            let report = train_run(&c, None, false)?;
            let last = report.history.last().expect("at least one epoch").clone();
            let ckpt = report
                .last_checkpoint
                .ok_or_else(|| HkgError::Checkpoint("sweep run wrote no checkpoint".into()))?;
            let metrics = eval_run(&c, &ckpt, &c.out_dir.join(EVAL_DIR))?;
            runs.push(AblationRun {
                value: value.clone(),
                seed,
                out_dir: c.out_dir.clone(),
                final_val_loss: last.val_loss,
                val_leaf_accuracy: last.val_metrics.leaf_accuracy,
                test_leaf_accuracy: metrics.leaf_accuracy,
                test_macro_f1: metrics.macro_avg.f1,
            });
        }
        rows.push(AblationRow {
            key: key.to_owned(),
            value,
            seeds: seeds.to_vec(),
            mean_test_leaf_accuracy: mean(runs.iter().map(|r| r.test_leaf_accuracy)),
            mean_test_macro_f1: mean(runs.iter().map(|r| r.test_macro_f1)),
            runs,
        });
    }
    write_run_file(cfg, &cfg.out_dir)?;
    write_json(&cfg.out_dir.join("ablation.json"), &rows)?;
    write_file(&cfg.out_dir.join("ablation.tsv"), ablation_table(&rows))?;
    Ok(rows)
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::from("key\tvalue\tseeds\tmean_test_leaf_acc\tmean_test_macro_f1\n");
    for r in rows {
        let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{:.4}\t{:.4}",
            r.key,
            r.value,
            seeds.join(","),
            r.mean_test_leaf_accuracy,
            r.mean_test_macro_f1
        );
    }
    s
}

pub fn invariant_summary(checks: &[InvariantCheck]) -> String {
    let mut s = String::new();
    for c in checks {
        let _ = writeln!(
            s,
            "{:<32} {}  {}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    s
}
