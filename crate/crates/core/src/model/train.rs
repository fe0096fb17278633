use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HkgModel, InputKind};
use crate::autodiff::{Checkpoint, PlateauScheduler, SchedulerState, Sgd, SgdConfig, Tensor};
use crate::error::{HkgError, Result};
use crate::hierarchy::{label_vector, LabelTree, NodeId};
use crate::metrics::leaf_prediction;
use crate::signal::{augment, Augment, Spectrogram};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Flattened input, `3*H*W` (channel-major) or `D` values.
    pub input: Vec<f64>,
    pub leaf: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: InputKind,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(kind: InputKind, examples: Vec<Example>) -> Result<Self> {
        let want = kind.example_len();
        if let Some(bad) = examples.iter().find(|e| e.input.len() != want) {
            return Err(HkgError::shape(
                "dataset example",
                &[bad.input.len()],
                &[want],
            ));
        }
        Ok(Dataset { kind, examples })
    }

    pub fn from_spectrograms(specs: &[Spectrogram], tree: &LabelTree) -> Result<Self> {
        let first = specs
            .first()
            .ok_or_else(|| HkgError::EmptyInput("no spectrograms".into()))?;
        let kind = InputKind::Spectrogram {
            height: first.height,
            width: first.width,
        };
        let examples = specs
            .iter()
            .map(|s| {
                Ok(Example {
                    input: s.data.clone(),
                    leaf: tree.leaf_by_name(&s.leaf_class)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(kind, examples)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Stack the given examples into one batch tensor.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.kind.example_len());
        for &i in indices {
            data.extend_from_slice(&self.examples[i].input);
        }
        let shape = match self.kind {
            InputKind::Spectrogram { height, width } => {
                vec![indices.len(), crate::signal::CHANNELS, height, width]
            }
            InputKind::Features { dim } => vec![indices.len(), dim],
        };
        Tensor { shape, data }
    }

    fn targets(&self, tree: &LabelTree, indices: &[usize]) -> Result<Tensor> {
        let c = tree.num_classes();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend(label_vector(tree, self.examples[i].leaf)?);
        }
        Ok(Tensor {
            shape: vec![indices.len(), c],
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            factor: 0.1,
            patience: 5,
            min_lr: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    pub plateau: PlateauConfig,
    pub seed: u64,
    /// Each listed op is applied independently with probability 1/2.
    pub augment: Vec<Augment>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 16,
            sgd: SgdConfig::default(),
            plateau: PlateauConfig::default(),
            seed: 0,
            augment: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValMetrics {
    pub leaf_accuracy: f64,
}

/// One line of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metrics: ValMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub last_checkpoint: Option<PathBuf>,
}

pub const HISTORY_FILE: &str = "history.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub fn checkpoint_path(out_dir: &Path, epoch: usize) -> PathBuf {
    out_dir
        .join(CHECKPOINT_DIR)
        .join(format!("epoch_{epoch:04}.hkg"))
}

/// Raw scores for every example, in dataset order.
pub fn score_dataset(model: &HkgModel, data: &Dataset, batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let c = model.num_classes();
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        let s = model.scores(&data.batch(chunk))?;
        out.extend(s.data.chunks(c).map(<[f64]>::to_vec));
    }
    Ok(out)
}

fn evaluate(
    model: &HkgModel,
    tree: &LabelTree,
    data: &Dataset,
    batch_size: usize,
) -> Result<(f64, f64)> {
    let scores = score_dataset(model, data, batch_size)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (s, ex) in scores.iter().zip(&data.examples) {
        let target = Tensor {
            shape: vec![s.len()],
            data: label_vector(tree, ex.leaf)?,
        };
        loss += super::bce_loss(
            &Tensor {
                shape: vec![s.len()],
                data: s.clone(),
            },
            &target,
        )?;
        let probs: Vec<f64> = s.iter().map(|&x| crate::autodiff::sigmoid(x)).collect();
        if leaf_prediction(&probs, tree)? == ex.leaf {
            correct += 1;
        }
    }
    let n = data.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

struct TrainState {
    sgd: Sgd,
    scheduler: PlateauScheduler,
    next_epoch: usize,
}

fn save_state(
    path: &Path,
    model: &HkgModel,
    state: &TrainState,
    epoch: usize,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut ckpt = Checkpoint::new();
    model.write_to(&mut ckpt)?;
    for (name, buf) in model.param_names.iter().zip(&state.sgd.momentum_buffers) {
        ckpt.put_tensor(
            &format!("momentum/{name}"),
            Tensor {
                shape: vec![buf.len()],
                data: buf.clone(),
            },
        );
    }
    let s = state.scheduler.state;
    ckpt.put_tensor(
        "train/scheduler",
        Tensor {
            shape: vec![5],
            data: vec![
                s.best_metric,
                s.epochs_since_improve as f64,
                s.factor,
                s.patience as f64,
                s.min_lr,
            ],
        },
    );
    ckpt.put_tensor("train/epoch", Tensor::scalar(epoch as f64));
    ckpt.put_tensor("train/lr", Tensor::scalar(state.sgd.lr()));
    ckpt.put_text("train/config", serde_json::to_string(cfg)?);
    ckpt.save(path)
}

fn load_state(ckpt: &Checkpoint, model: &HkgModel, cfg: &TrainConfig) -> Result<TrainState> {
    let mut sgd = Sgd::new(cfg.sgd, &model.params);
    for (i, name) in model.param_names.iter().enumerate() {
        let buf = ckpt.tensor(&format!("momentum/{name}"))?;
        if buf.numel() != sgd.momentum_buffers[i].len() {
            return Err(HkgError::Checkpoint(format!(
                "momentum buffer {name} has wrong length"
            )));
        }
        sgd.momentum_buffers[i] = buf.data.clone();
    }
    sgd.set_lr(ckpt.tensor("train/lr")?.data[0]);
    let s = &ckpt.tensor("train/scheduler")?.data;
    if s.len() != 5 {
        return Err(HkgError::Checkpoint(
            "scheduler record must hold 5 values".into(),
        ));
    }
    let scheduler = PlateauScheduler::from_state(SchedulerState {
        best_metric: s[0],
        epochs_since_improve: s[1] as usize,
        factor: s[2],
        patience: s[3] as usize,
        min_lr: s[4],
    });
    let epoch = ckpt.tensor("train/epoch")?.data[0] as usize;
    Ok(TrainState {
        sgd,
        scheduler,
        next_epoch: epoch + 1,
    })
}

/// Run the training loop. With `out_dir`, one checkpoint per epoch goes to
/// `checkpoints/` and one JSON line per epoch is appended to `history.jsonl`.
/// `resume` replaces `model` with the checkpointed one and continues from the
/// epoch after it.
pub fn train(
    model: &mut HkgModel,
    tree: &LabelTree,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    resume: Option<&Path>,
) -> Result<TrainReport> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(HkgError::EmptyInput(
            "train and validation splits must be non-empty".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(HkgError::Config("batch_size must be >= 1".into()));
    }
    if train_set.kind != model.config.input || val_set.kind != model.config.input {
        return Err(HkgError::Config(format!(
            "dataset input {:?} does not match model input {:?}",
            train_set.kind, model.config.input
        )));
    }
    let mut last_checkpoint = None;
    let mut state = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            *model = HkgModel::read_from(&ckpt)?;
            last_checkpoint = Some(path.to_path_buf());
            load_state(&ckpt, model, cfg)?
        }
        None => TrainState {
            sgd: Sgd::new(cfg.sgd, &model.params),
            scheduler: PlateauScheduler::new(
                cfg.plateau.factor,
                cfg.plateau.patience,
                cfg.plateau.min_lr,
            )?,
            next_epoch: 1,
        },
    };
    model.check_node_order(&tree.class_names())?;

    let mut history_file = match out_dir {
        Some(dir) => {
            let ckdir = dir.join(CHECKPOINT_DIR);
            std::fs::create_dir_all(&ckdir).map_err(|e| HkgError::io(&ckdir, e))?;
            let path = dir.join(HISTORY_FILE);
            let file = OpenOptions::new()
                .create(true)
                .write(true)
                .append(resume.is_some())
                .truncate(resume.is_none())
                .open(&path)
                .map_err(|e| HkgError::io(&path, e))?;
            Some((path, file))
        }
        None => None,
    };

    let diverged = |epoch: usize, why: String, last: &Option<PathBuf>| {
        let last = last
            .as_ref()
            .map_or("none".to_string(), |p| p.display().to_string());
        HkgError::Divergence(format!(
            "epoch {epoch}: {why}; last good checkpoint: {last}"
        ))
    };

    let mut history = Vec::new();
    for epoch in state.next_epoch..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);

        let lr = state.sgd.lr();
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = train_set.batch(chunk);
            if !cfg.augment.is_empty() {
                augment_batch(&mut batch, train_set.kind, &cfg.augment, &mut rng);
            }
            let targets = train_set.targets(tree, chunk)?;
            let (loss, grads) = match model.loss_and_grads(&batch, &targets) {
                Ok(v) => v,
                Err(HkgError::Numeric(m)) => return Err(diverged(epoch, m, &last_checkpoint)),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(diverged(
                    epoch,
                    format!("training loss {loss}"),
                    &last_checkpoint,
                ));
            }
            match state.sgd.step(&mut model.params, &grads) {
                Ok(()) => {}
                Err(HkgError::Divergence(m)) => return Err(diverged(epoch, m, &last_checkpoint)),
                Err(e) => return Err(e),
            }
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_acc) = match evaluate(model, tree, val_set, cfg.batch_size.max(64)) {
            Ok(v) => v,
            Err(HkgError::Numeric(m)) => return Err(diverged(epoch, m, &last_checkpoint)),
            Err(e) => return Err(e),
        };
        let next_lr = state.scheduler.step(val_loss, lr)?;
        state.sgd.set_lr(next_lr);

        let record = EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
            val_metrics: ValMetrics {
                leaf_accuracy: val_acc,
            },
        };
        log::info!(
            "epoch {epoch}: lr {lr:.2e} train_loss {train_loss:.4} val_loss {val_loss:.4} val_acc {val_acc:.4}"
        );
        if let (Some(dir), Some((path, file))) = (out_dir, history_file.as_mut()) {
            let ck = checkpoint_path(dir, epoch);
            save_state(&ck, model, &state, epoch, cfg)?;
            last_checkpoint = Some(ck);
            let line = serde_json::to_string(&record)?;
            writeln!(file, "{line}").map_err(|e| HkgError::io(path.as_path(), e))?;
        }
        history.push(record);
    }
    Ok(TrainReport {
        history,
        last_checkpoint,
    })
}

fn augment_batch(batch: &mut Tensor, kind: InputKind, ops: &[Augment], rng: &mut ChaCha8Rng) {
    let InputKind::Spectrogram { height, width } = kind else {
        return;
    };
    let per = kind.example_len();
    for chunk in batch.data.chunks_mut(per) {
        let chosen: Vec<Augment> = ops
            .iter()
            .copied()
            .filter(|_| rng.random_bool(0.5))
            .collect();
        if chosen.is_empty() {
            continue;
        }
        let spec = Spectrogram {
            height,
            width,
            data: chunk.to_vec(),
            leaf_class: String::new(),
            source_segment: Default::default(),
        };
        chunk.copy_from_slice(&augment(&spec, &chosen).data);
    }
}
