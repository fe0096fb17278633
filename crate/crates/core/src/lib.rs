//! Hierarchical-knowledge-guided fault intensity diagnosis: signal
//! preprocessing, label-tree correlation matrices, a GCN-generated classifier
//! over learned features, training, evaluation and synthetic data.

pub mod autodiff;
pub mod datagen;
pub mod embedding;
pub mod error;
pub mod hierarchy;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod signal;

pub use error::{HkgError, Result};
pub use hierarchy::{LabelTree, MatrixPipeline, NodeId};
pub use matrix::Matrix;
pub use model::HkgModel;
pub use signal::{RawStream, Segment, Spectrogram};
