//! Run configuration: a JSON file with command-line overrides on top.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hkg_core::autodiff::{InitScheme, SgdConfig};
use hkg_core::embedding::OovPolicy;
use hkg_core::hierarchy::PipelineParams;
use hkg_core::model::{
    ConvBlock, FeatureLearnerConfig, GcnConfig, HeadKind, InputKind, ModelConfig, PlateauConfig,
    TrainConfig,
};
use hkg_core::signal::{Augment, PreprocessConfig, StftConfig, WindowFn};
use hkg_core::{HkgError, Result};

/// Precomputed pooled features used in place of spectrograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureFiles {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset root holding `train/`, `val/` and `test/`.
    pub data_root: PathBuf,
    /// Label tree JSON; the built-in cavitation tree when absent.
    pub tree: Option<PathBuf>,
    /// Word-vector file (optionally gzip); the bundled fixture when absent.
    pub embeddings: Option<PathBuf>,
    pub oov: OovPolicy,
    pub out_dir: PathBuf,
    pub seed: u64,

    pub tau: f64,
    pub eta: f64,
    pub smoothing: f64,
    /// Leaf-count override for the correlation matrices.
    pub class_counts: Option<BTreeMap<String, u64>>,

    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub augment: Vec<Augment>,

    pub segment_window: usize,
    pub segment_step: usize,
    pub stft_window: usize,
    pub stft_hop: usize,
    pub window_fn: WindowFn,
    pub resize: [usize; 2],

    pub head: HeadKind,
    pub cnn: Vec<ConvBlock>,
    pub input_scale: f64,
    pub slope: f64,
    pub gcn_dims: Vec<usize>,
    pub init: InitScheme,

    pub features: Option<FeatureFiles>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sgd = SgdConfig::default();
        let plateau = PlateauConfig::default();
        let params = PipelineParams::default();
        let fl = FeatureLearnerConfig::default();
        RunConfig {
            data_root: PathBuf::from("data"),
            tree: None,
            embeddings: None,
            oov: OovPolicy::default(),
            out_dir: PathBuf::from("runs/default"),
            seed: 7,
            tau: params.tau,
            eta: params.eta,
            smoothing: params.smoothing,
            class_counts: None,
            lr: sgd.lr,
            momentum: sgd.momentum,
            weight_decay: sgd.weight_decay,
            epochs: 30,
            batch_size: 16,
            plateau_factor: plateau.factor,
            plateau_patience: plateau.patience,
            min_lr: plateau.min_lr,
            augment: Vec::new(),
            segment_window: 4096,
            segment_step: 4096,
            stft_window: 256,
            stft_hop: 32,
            window_fn: WindowFn::Hann,
            resize: [64, 64],
            head: HeadKind::Gcn,
            cnn: fl.blocks,
            input_scale: fl.input_scale,
            slope: fl.slope,
            gcn_dims: GcnConfig::default().layer_dims,
            init: InitScheme::default(),
            features: None,
        }
    }
}

pub const GCN_LAYERS_KEY: &str = "gcn_layers";
const HIDDEN_WIDTH: usize = 32;

fn bad(key: &str, why: impl std::fmt::Display) -> HkgError {
    HkgError::Config(format!("`{key}` {why}"))
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| HkgError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HkgError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json_str(&text)
    }

    /// Every range constraint, reporting the first offending key.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(bad(
                "tau",
                format_args!("must be in (0, 1], got {}", self.tau),
            ));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(bad(
                "eta",
                format_args!("must be in [0, 1], got {}", self.eta),
            ));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(bad(
                "smoothing",
                format_args!("must be >= 0, got {}", self.smoothing),
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(bad("lr", format_args!("must be >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(bad(
                "momentum",
                format_args!("must be in [0, 1), got {}", self.momentum),
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(bad(
                "weight_decay",
                format_args!("must be >= 0, got {}", self.weight_decay),
            ));
        }
        if self.epochs == 0 {
            return Err(bad("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be >= 1"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(bad(
                "plateau_factor",
                format_args!("must be in (0, 1), got {}", self.plateau_factor),
            ));
        }
        if self.plateau_patience == 0 {
            return Err(bad("plateau_patience", "must be >= 1"));
        }
        if self.min_lr.is_nan() || self.min_lr < 0.0 {
            return Err(bad(
                "min_lr",
                format_args!("must be >= 0, got {}", self.min_lr),
            ));
        }
        if self.segment_window == 0 {
            return Err(bad("segment_window", "must be >= 1"));
        }
        if self.segment_step == 0 {
            return Err(bad("segment_step", "must be >= 1"));
        }
        if self.stft_window == 0 || self.stft_window > self.segment_window {
            return Err(bad(
                "stft_window",
                format_args!(
                    "must be in 1..={} (segment_window), got {}",
                    self.segment_window, self.stft_window
                ),
            ));
        }
        if self.stft_hop == 0 {
            return Err(bad("stft_hop", "must be >= 1"));
        }
        if self.resize.contains(&0) {
            return Err(bad("resize", "dimensions must be >= 1"));
        }
        if self.cnn.is_empty() {
            return Err(bad("cnn", "needs at least one block"));
        }
        if self
            .cnn
            .iter()
            .any(|b| b.out_channels == 0 || b.kernel == 0 || b.stride == 0)
        {
            return Err(bad("cnn", "channels, kernel and stride must be >= 1"));
        }
        if !(self.input_scale.is_finite() && self.input_scale != 0.0) {
            return Err(bad("input_scale", "must be finite and non-zero"));
        }
        if !(self.slope >= 0.0 && self.slope < 1.0) {
            return Err(bad(
                "slope",
                format_args!("must be in [0, 1), got {}", self.slope),
            ));
        }
        if self.head == HeadKind::Gcn {
            if self.gcn_dims.is_empty() || self.gcn_dims.contains(&0) {
                return Err(bad(
                    "gcn_dims",
                    "must be a non-empty list of positive widths",
                ));
            }
            if self.features.is_none() {
                let d = self.cnn.last().map_or(0, |b| b.out_channels);
                if *self.gcn_dims.last().expect("non-empty") != d {
                    return Err(bad(
                        "gcn_dims",
                        format_args!(
                            "last width must equal the feature width {d} (last cnn block)"
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Apply one `key=value` override, parsing `value` as JSON where possible
    /// and as a bare string otherwise.
    ///
    /// `gcn_layers=n` is a derived key: 0 selects the linear head, n >= 1 a
    /// GCN head of n layers whose hidden widths are 32.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key == GCN_LAYERS_KEY {
            return self.set_gcn_layers(value);
        }
        let mut doc = serde_json::to_value(&*self)?;
        let obj = doc.as_object_mut().expect("config serializes to an object");
        if !obj.contains_key(key) {
            return Err(HkgError::Config(format!("unknown key `{key}`")));
        }
        let parsed = serde_json::from_str(value)
            .unwrap_or_else(|_| serde_json::Value::String(value.to_owned()));
        obj.insert(key.to_owned(), parsed);
        let updated: RunConfig =
            serde_json::from_value(doc).map_err(|e| HkgError::Config(format!("`{key}`: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    fn set_gcn_layers(&mut self, value: &str) -> Result<()> {
        let n: usize = value.trim().parse().map_err(|_| {
            bad(
                GCN_LAYERS_KEY,
                format_args!("must be a non-negative integer, got {value:?}"),
            )
        })?;
        let mut updated = self.clone();
        if n == 0 {
            updated.head = HeadKind::Linear;
        } else {
            let width = match &self.features {
                Some(_) => *self.gcn_dims.last().expect("validated non-empty"),
                None => self.cnn.last().map_or(0, |b| b.out_channels),
            };
            updated.head = HeadKind::Gcn;
            updated.gcn_dims = std::iter::repeat_n(HIDDEN_WIDTH, n - 1)
                .chain([width])
                .collect();
        }
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn pipeline_params(&self) -> PipelineParams {
        PipelineParams {
            tau: self.tau,
            eta: self.eta,
            smoothing: self.smoothing,
        }
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            window: self.segment_window,
            step: self.segment_step,
            stft: StftConfig {
                win_len: self.stft_window,
                hop: self.stft_hop,
                window: self.window_fn,
            },
            target: (self.resize[0], self.resize[1]),
        }
    }

    pub fn model_config(&self, input: InputKind) -> ModelConfig {
        ModelConfig {
            input,
            feature: FeatureLearnerConfig {
                blocks: self.cnn.clone(),
                slope: self.slope,
                input_scale: self.input_scale,
            },
            head: self.head,
            gcn: GcnConfig {
                layer_dims: self.gcn_dims.clone(),
                slope: self.slope,
            },
            init: self.init,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            sgd: SgdConfig {
                lr: self.lr,
                momentum: self.momentum,
                weight_decay: self.weight_decay,
            },
            plateau: PlateauConfig {
                factor: self.plateau_factor,
                patience: self.plateau_patience,
                min_lr: self.min_lr,
            },
            seed: self.seed,
            augment: self.augment.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn zero_tau_rejected_naming_key() {
        let err = RunConfig::from_json_str(r#"{"tau": 0}"#).unwrap_err();
        assert!(
            matches!(err, HkgError::Config(ref m) if m.contains("`tau`")),
            "{err}"
        );
    }

    #[test]
    fn out_of_range_keys_are_named() {
        for (json, key) in [
            (r#"{"eta": 1.5}"#, "eta"),
            (r#"{"batch_size": 0}"#, "batch_size"),
            (r#"{"stft_window": 99999}"#, "stft_window"),
            (r#"{"gcn_dims": [32, 10]}"#, "gcn_dims"),
            (r#"{"momentum": 1.0}"#, "momentum"),
        ] {
            let err = RunConfig::from_json_str(json).unwrap_err().to_string();
            assert!(err.contains(&format!("`{key}`")), "{json}: {err}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json_str(r#"{"taux": 0.3}"#).is_err());
    }

    #[test]
    fn overrides_parse_values() {
        let mut c = RunConfig::default();
        c.set("tau", "0.5").unwrap();
        c.set("head", "linear").unwrap();
        c.set("gcn_dims", "[16,64]").unwrap();
        assert_eq!(
            (c.tau, c.head, c.gcn_dims.clone()),
            (0.5, HeadKind::Linear, vec![16, 64])
        );
        assert!(c.set("tau", "0").is_err());
        assert_eq!(c.tau, 0.5);
        assert!(c.set("nope", "1").is_err());
    }

    #[test]
    fn gcn_layers_key_sets_head_and_depth() {
        let mut c = RunConfig::default();
        c.set("gcn_layers", "0").unwrap();
        assert_eq!(c.head, HeadKind::Linear);
        c.set("gcn_layers", "3").unwrap();
        assert_eq!(
            (c.head, c.gcn_dims.clone()),
            (HeadKind::Gcn, vec![32, 32, 64])
        );
        assert!(c.set("gcn_layers", "-1").is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), c);
    }
}
