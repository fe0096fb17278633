//! The diagnosis network: a convolutional feature learner with global max
//! pooling, a classifier generated by a GCN over class embeddings, their
//! dot-product scores, the multi-label loss and the training loop.

mod features;
mod train;

pub use features::{export_features, import_features, FeatureRecord};
pub use train::{
    checkpoint_path, score_dataset, train, Dataset, EpochRecord, Example, PlateauConfig,
    TrainConfig, TrainReport, ValMetrics, CHECKPOINT_DIR, HISTORY_FILE,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{uniform_init, Checkpoint, InitScheme, Tape, Tensor, Var};
use crate::embedding::ClassEmbeddings;
use crate::error::{HkgError, Result};
use crate::matrix::Matrix;

pub const DEFAULT_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvBlock {
    pub const fn new(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvBlock {
            out_channels,
            kernel,
            stride,
            padding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLearnerConfig {
    pub blocks: Vec<ConvBlock>,
    /// LeakyReLU negative slope after every block.
    pub slope: f64,
    /// Multiplier applied to the dB input before the first convolution.
    pub input_scale: f64,
}

impl Default for FeatureLearnerConfig {
    fn default() -> Self {
        FeatureLearnerConfig {
            blocks: vec![
                ConvBlock::new(8, 3, 2, 1),
                ConvBlock::new(16, 3, 2, 1),
                ConvBlock::new(64, 3, 2, 1),
            ],
            slope: DEFAULT_SLOPE,
            input_scale: 1.0 / 40.0,
        }
    }
}

impl FeatureLearnerConfig {
    /// Pooled feature width: the last block's channel count.
    pub fn output_dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.out_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(HkgError::Config(
                "feature learner needs at least one conv block".into(),
            ));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.out_channels == 0 || b.kernel == 0 || b.stride == 0 {
                return Err(HkgError::Config(format!(
                    "conv block {i}: channels, kernel and stride must be >= 1"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    /// Output width of each layer; the last must equal the feature width.
    pub layer_dims: Vec<usize>,
    /// LeakyReLU slope between layers (the last layer is linear).
    pub slope: f64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            layer_dims: vec![32, 64],
            slope: DEFAULT_SLOPE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Classifier generated from class embeddings by the GCN.
    #[default]
    Gcn,
    /// Directly learned `C x D` classifier, no label graph.
    Linear,
}

impl std::str::FromStr for HeadKind {
    type Err = HkgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(HeadKind::Gcn),
            "linear" => Ok(HeadKind::Linear),
            other => Err(HkgError::Config(format!(
                "unknown head `{other}` (expected gcn|linear)"
            ))),
        }
    }
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HeadKind::Gcn => "gcn",
            HeadKind::Linear => "linear",
        })
    }
}

/// What a single example looks like on the way in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// `3 x height x width` spectrogram through the conv feature learner.
    Spectrogram { height: usize, width: usize },
    /// Precomputed pooled features of the given width.
    Features { dim: usize },
}

impl InputKind {
    pub fn example_len(&self) -> usize {
        match *self {
            InputKind::Spectrogram { height, width } => crate::signal::CHANNELS * height * width,
            InputKind::Features { dim } => dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input: InputKind,
    pub feature: FeatureLearnerConfig,
    pub head: HeadKind,
    pub gcn: GcnConfig,
    #[serde(default)]
    pub init: InitScheme,
}

impl ModelConfig {
    pub fn feature_dim(&self) -> usize {
        match self.input {
            InputKind::Spectrogram { .. } => self.feature.output_dim(),
            InputKind::Features { dim } => dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.input {
            InputKind::Spectrogram { height, width } => {
                if height == 0 || width == 0 {
                    return Err(HkgError::Config(
                        "input height and width must be >= 1".into(),
                    ));
                }
                self.feature.validate()?;
            }
            InputKind::Features { dim: 0 } => {
                return Err(HkgError::Config("feature dim must be >= 1".into()));
            }
            InputKind::Features { .. } => {}
        }
        if self.head == HeadKind::Gcn {
            let d = self.feature_dim();
            match self.gcn.layer_dims.last() {
                None => return Err(HkgError::Config("gcn head needs at least one layer".into())),
                Some(&last) if last != d => {
                    return Err(HkgError::Config(format!(
                        "last gcn layer dim {last} must equal feature dim {d}"
                    )))
                }
                _ => {}
            }
            if self.gcn.layer_dims.contains(&0) {
                return Err(HkgError::Config("gcn layer dims must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Parameters plus the fixed graph inputs of the classifier generator.
#[derive(Debug, Clone, PartialEq)]
pub struct HkgModel {
    pub config: ModelConfig,
    pub param_names: Vec<String>,
    pub params: Vec<Tensor>,
    /// `C x d` class embeddings.
    pub embeddings: Tensor,
    /// `C x C` re-weighted correlation matrix.
    pub adjacency: Tensor,
    pub node_order: Vec<String>,
}

/// Handles produced by one forward pass on a tape.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// `[batch, D]`
    pub features: Var,
    /// `[C, D]`
    pub classifier: Var,
    /// `[batch, C]` raw scores.
    pub scores: Var,
}

impl HkgModel {
    /// Fresh model with seeded uniform initialization.
    pub fn new(
        config: ModelConfig,
        embeddings: &ClassEmbeddings,
        adjacency: &Matrix,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let c = embeddings.node_order.len();
        if embeddings.matrix.rows != c || adjacency.shape() != [c, c] {
            return Err(HkgError::shape(
                "model graph inputs",
                &embeddings.matrix.shape(),
                &adjacency.shape(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut params = Vec::new();
        if let InputKind::Spectrogram { .. } = config.input {
            let mut in_ch = crate::signal::CHANNELS;
            for (i, b) in config.feature.blocks.iter().enumerate() {
                let fan_in = in_ch * b.kernel * b.kernel;
                names.push(format!("conv{i}.weight"));
                params.push(uniform_init(
                    &[b.out_channels, in_ch, b.kernel, b.kernel],
                    fan_in,
                    config.init,
                    &mut rng,
                ));
                names.push(format!("conv{i}.bias"));
                params.push(uniform_init(
                    &[b.out_channels],
                    fan_in,
                    config.init,
                    &mut rng,
                ));
                in_ch = b.out_channels;
            }
        }
        match config.head {
            HeadKind::Gcn => {
                let mut fan_in = embeddings.matrix.cols;
                for (i, &out) in config.gcn.layer_dims.iter().enumerate() {
                    names.push(format!("gcn{i}.weight"));
                    params.push(uniform_init(&[fan_in, out], fan_in, config.init, &mut rng));
                    fan_in = out;
                }
            }
            HeadKind::Linear => {
                let d = config.feature_dim();
                names.push("linear.weight".into());
                params.push(uniform_init(&[c, d], d, config.init, &mut rng));
            }
        }
        Ok(HkgModel {
            config,
            param_names: names,
            params,
            embeddings: Tensor {
                shape: vec![c, embeddings.matrix.cols],
                data: embeddings.matrix.data.clone(),
            },
            adjacency: Tensor {
                shape: vec![c, c],
                data: adjacency.data.clone(),
            },
            node_order: embeddings.node_order.clone(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.node_order.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim()
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Record a full forward pass. `params` are the tape handles of
    /// `self.params`, in order; `batch` is `[B, 3, H, W]` or `[B, D]`.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], batch: &Tensor) -> Result<Forward> {
        let mut next = params.iter().copied();
        let features = match self.config.input {
            InputKind::Spectrogram { height, width } => {
                let b = batch.shape.first().copied().unwrap_or(0);
                let want = [b, crate::signal::CHANNELS, height, width];
                if batch.shape != want {
                    return Err(HkgError::shape(
                        "feature_forward input",
                        &batch.shape,
                        &want,
                    ));
                }
                let x = tape.constant(batch.clone());
                let mut h = tape.scale(x, self.config.feature.input_scale);
                for block in &self.config.feature.blocks {
                    let (w, bias) = (take(&mut next)?, take(&mut next)?);
                    let z = tape.conv2d(h, w, Some(bias), block.stride, block.padding)?;
                    h = tape.leaky_relu(z, self.config.feature.slope);
                }
                tape.global_max_pool(h)?
            }
            InputKind::Features { dim } => {
                if batch.rank() != 2 || batch.shape[1] != dim {
                    return Err(HkgError::shape("feature input", &batch.shape, &[0, dim]));
                }
                tape.constant(batch.clone())
            }
        };
        let classifier = match self.config.head {
            HeadKind::Gcn => {
                let adj = tape.constant(self.adjacency.clone());
                let mut h = tape.constant(self.embeddings.clone());
                let layers = self.config.gcn.layer_dims.len();
                for i in 0..layers {
                    let w = take(&mut next)?;
                    let ah = tape.matmul(adj, h)?;
                    h = tape.matmul(ah, w)?;
                    if i + 1 < layers {
                        h = tape.leaky_relu(h, self.config.gcn.slope);
                    }
                }
                h
            }
            HeadKind::Linear => take(&mut next)?,
        };
        let ct = tape.transpose(classifier)?;
        let scores = tape.matmul(features, ct)?;
        Ok(Forward {
            features,
            classifier,
            scores,
        })
    }

    fn run<T>(
        &self,
        batch: &Tensor,
        pick: impl FnOnce(&Forward) -> Var,
        finish: impl FnOnce(Tensor) -> T,
    ) -> Result<T> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.constant(p.clone()))
            .collect();
        let fwd = self.forward(&mut tape, &vars, batch)?;
        let v = pick(&fwd);
        Ok(finish(tape.value(v).clone()))
    }

    /// Pooled features `[B, D]`.
    pub fn feature_forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.run(batch, |f| f.features, |t| t)
    }

    /// Generated (or learned) classifier `[C, D]`.
    pub fn classifier(&self) -> Result<Tensor> {
        let d = self.feature_dim();
        let probe = match self.config.input {
            InputKind::Spectrogram { height, width } => {
                Tensor::zeros(&[0, crate::signal::CHANNELS, height, width])
            }
            InputKind::Features { .. } => Tensor::zeros(&[0, d]),
        };
        self.run(&probe, |f| f.classifier, |t| t)
    }

    /// Raw scores `[B, C]`.
    pub fn scores(&self, batch: &Tensor) -> Result<Tensor> {
        self.run(batch, |f| f.scores, |t| t)
    }

    /// Mean loss over the batch and its gradient for every parameter.
    pub fn loss_and_grads(&self, batch: &Tensor, targets: &Tensor) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|p| tape.param(p.clone())).collect();
        let fwd = self.forward(&mut tape, &vars, batch)?;
        let loss = tape.bce_with_logits(fwd.scores, targets)?;
        let grads = tape.backward(loss)?;
        let g = vars
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| grads.get_or_zeros(v, p.numel()))
            .collect();
        Ok((tape.value(loss).data[0], g))
    }

    /// Serialize parameters and graph inputs under `model/` keys.
    pub fn write_to(&self, ckpt: &mut Checkpoint) -> Result<()> {
        ckpt.put_text("model/config", serde_json::to_string(&self.config)?);
        ckpt.put_text("model/node_order", serde_json::to_string(&self.node_order)?);
        ckpt.put_text("model/head", self.config.head.to_string());
        ckpt.put_tensor("model/embeddings", self.embeddings.clone());
        ckpt.put_tensor("model/adjacency", self.adjacency.clone());
        for (name, p) in self.param_names.iter().zip(&self.params) {
            ckpt.put_tensor(&format!("param/{name}"), p.clone());
        }
        Ok(())
    }

    pub fn read_from(ckpt: &Checkpoint) -> Result<Self> {
        let config: ModelConfig = serde_json::from_str(ckpt.text("model/config")?)?;
        config.validate()?;
        let node_order: Vec<String> = serde_json::from_str(ckpt.text("model/node_order")?)?;
        let embeddings = ckpt.tensor("model/embeddings")?.clone();
        let adjacency = ckpt.tensor("model/adjacency")?.clone();
        let c = node_order.len();
        if embeddings.rank() != 2 || embeddings.shape[0] != c || adjacency.shape != [c, c] {
            return Err(HkgError::Checkpoint(
                "graph inputs do not match node_order".into(),
            ));
        }
        let template = HkgModel::new(
            config.clone(),
            &ClassEmbeddings {
                matrix: Matrix::from_vec(c, embeddings.shape[1], embeddings.data.clone())?,
                node_order: node_order.clone(),
            },
            &Matrix::from_vec(c, c, adjacency.data.clone())?,
            0,
        )?;
        let params = template
            .param_names
            .iter()
            .zip(&template.params)
            .map(|(name, t)| {
                let p = ckpt.tensor(&format!("param/{name}"))?;
                if p.shape != t.shape {
                    return Err(HkgError::Checkpoint(format!(
                        "parameter {name} has shape {:?}, expected {:?}",
                        p.shape, t.shape
                    )));
                }
                Ok(p.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HkgModel { params, ..template })
    }

    /// Fail unless the model was built for exactly these classes in this order.
    pub fn check_node_order(&self, names: &[String]) -> Result<()> {
        if self.node_order != names {
            return Err(HkgError::TreeMismatch(format!(
                "model classes {:?} differ from tree classes {:?}",
                self.node_order, names
            )));
        }
        Ok(())
    }
}

fn take(it: &mut impl Iterator<Item = Var>) -> Result<Var> {
    it.next()
        .ok_or_else(|| HkgError::Config("parameter list shorter than the architecture".into()))
}

/// Classifier from the graph inputs: every layer is `adj * h * W`, with
/// LeakyReLU between layers and a linear last layer.
pub fn gcn_forward(
    embeddings: &Tensor,
    adjacency: &Tensor,
    weights: &[Tensor],
    slope: f64,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let adj = tape.constant(adjacency.clone());
    let mut h = tape.constant(embeddings.clone());
    for (i, w) in weights.iter().enumerate() {
        let w = tape.constant(w.clone());
        let ah = tape.matmul(adj, h)?;
        h = tape.matmul(ah, w)?;
        if i + 1 < weights.len() {
            h = tape.leaky_relu(h, slope);
        }
    }
    Ok(tape.value(h).clone())
}

/// Raw scores `features [B, D] x classifier [C, D]^T`.
pub fn predict(features: &Tensor, classifier: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let f = tape.constant(features.clone());
    let c = tape.constant(classifier.clone());
    let ct = tape.transpose(c)?;
    let s = tape.matmul(f, ct)?;
    Ok(tape.value(s).clone())
}

/// Mean binary cross-entropy on logits.
pub fn bce_loss(scores: &Tensor, targets: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let s = tape.constant(scores.clone());
    let l = tape.bce_with_logits(s, targets)?;
    Ok(tape.value(l).data[0])
}

#[cfg(test)]
mod tests;
