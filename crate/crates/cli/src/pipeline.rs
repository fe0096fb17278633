//! Loading trees, embeddings, splits and counts for a run.

use std::path::Path;

use rayon::prelude::*;

use hkg_core::datagen::Split;
use hkg_core::embedding::{class_embeddings, fixture_table, ClassEmbeddings, EmbeddingTable};
use hkg_core::hierarchy::{
    cavitation_tree, counts_from_leaf_totals, ClassCounts, LabelTree, MatrixPipeline,
};
use hkg_core::model::{import_features, Dataset, Example, InputKind};
use hkg_core::signal::{io::read_stream_dir, preprocess_stream, Spectrogram};
use hkg_core::{HkgError, Result};

use crate::config::RunConfig;

pub const THREADS_ENV: &str = "HKG_THREADS";

/// Run `f` inside a rayon pool capped by `HKG_THREADS` (all cores when unset).
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                HkgError::Config(format!(
                    "`{THREADS_ENV}` must be a positive integer, got {v:?}"
                ))
            })?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HkgError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn load_tree(cfg: &RunConfig) -> Result<LabelTree> {
    match &cfg.tree {
        Some(p) => LabelTree::from_json_file(p),
        None => Ok(cavitation_tree()),
    }
}

pub fn load_embeddings(cfg: &RunConfig, tree: &LabelTree) -> Result<ClassEmbeddings> {
    let table = match &cfg.embeddings {
        Some(p) => EmbeddingTable::from_file(p)?,
        None => fixture_table(),
    };
    class_embeddings(tree, &table, cfg.oov)
}

fn split_dir(cfg: &RunConfig, split: Split) -> std::path::PathBuf {
    cfg.data_root.join(split.dir_name())
}

/// Number of stream files per leaf directory of a split.
fn stream_counts(dir: &Path, tree: &LabelTree) -> Result<Vec<(hkg_core::NodeId, u64)>> {
    let mut out = Vec::new();
    for leaf in tree.leaves() {
        let d = dir.join(tree.name(leaf));
        let n = match std::fs::read_dir(&d) {
            Ok(entries) => entries
                .filter_map(|e| e.ok())
                .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
                .count() as u64,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
            Err(e) => return Err(HkgError::Io { path: d, source: e }),
        };
        out.push((leaf, n));
    }
    Ok(out)
}

/// Class counts from the training split only, or from `class_counts` when set.
pub fn train_counts(cfg: &RunConfig, tree: &LabelTree) -> Result<ClassCounts> {
    let totals = if let Some(map) = &cfg.class_counts {
        map.iter()
            .map(|(name, &n)| Ok((tree.leaf_by_name(name)?, n)))
            .collect::<Result<Vec<_>>>()?
    } else if let Some(files) = &cfg.features {
        let mut totals: Vec<(hkg_core::NodeId, u64)> =
            tree.leaves().into_iter().map(|l| (l, 0)).collect();
        for r in import_features(&files.train)? {
            let leaf = tree.leaf_by_name(&r.label)?;
            totals
                .iter_mut()
                .find(|(l, _)| *l == leaf)
                .expect("leaf listed")
                .1 += 1;
        }
        totals
    } else {
        let dir = split_dir(cfg, Split::Train);
        if !dir.is_dir() {
            return Err(HkgError::Io {
                path: dir,
                source: std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "training split directory not found",
                ),
            });
        }
        stream_counts(&dir, tree)?
    };
    counts_from_leaf_totals(tree, &totals)
}

pub fn build_matrices(cfg: &RunConfig, tree: &LabelTree) -> Result<MatrixPipeline> {
    let counts = train_counts(cfg, tree)?;
    MatrixPipeline::build(tree, &counts, cfg.pipeline_params())
}

/// Spectrograms of every stream in one split, in file order.
pub fn split_spectrograms(cfg: &RunConfig, split: Split) -> Result<Vec<Spectrogram>> {
    let streams = read_stream_dir(&split_dir(cfg, split))?;
    if streams.is_empty() {
        return Err(HkgError::EmptyInput(format!(
            "no streams in the {} split",
            split.dir_name()
        )));
    }
    let pre = cfg.preprocess();
    pre.validate()?;
    let per_stream: Vec<Result<Vec<Spectrogram>>> = with_pool(|| {
        streams
            .par_iter()
            .map(|s| preprocess_stream(s, &pre))
            .collect()
    })?;
    let mut out = Vec::new();
    for specs in per_stream {
        out.extend(specs?);
    }
    Ok(out)
}

/// A split as model input: spectrograms, or imported features when configured.
pub fn load_split(cfg: &RunConfig, tree: &LabelTree, split: Split) -> Result<Dataset> {
    match &cfg.features {
        Some(files) => {
            let path = match split {
                Split::Train => &files.train,
                Split::Val => &files.val,
                Split::Test => &files.test,
            };
            let records = import_features(path)?;
            let dim = records[0].features.len();
            let examples = records
                .into_iter()
                .map(|r| {
                    Ok(Example {
                        input: r.features,
                        leaf: tree.leaf_by_name(&r.label)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Dataset::new(InputKind::Features { dim }, examples)
        }
        None => Dataset::from_spectrograms(&split_spectrograms(cfg, split)?, tree),
    }
}
