//! A small tape-based reverse-mode gradient engine in double precision, with
//! the SGD optimizer, plateau scheduler and checkpoint container used by the
//! training loop.

pub mod checkpoint;
mod kernels;
mod optim;
mod tape;

pub use checkpoint::Checkpoint;
pub use optim::{PlateauScheduler, SchedulerState, Sgd, SgdConfig};
pub use tape::{sigmoid, Grads, Tape, Var};

use serde::{Deserialize, Serialize};

use crate::error::{HkgError, Result};

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(HkgError::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Bound of the uniform parameter initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `±sqrt(6/fan_in)`.
    #[default]
    HeUniform,
    /// `±1/sqrt(fan_in)`.
    FanIn,
}

impl InitScheme {
    pub fn bound(self, fan_in: usize) -> f64 {
        let fan_in = fan_in.max(1) as f64;
        match self {
            InitScheme::HeUniform => (6.0 / fan_in).sqrt(),
            InitScheme::FanIn => 1.0 / fan_in.sqrt(),
        }
    }
}

/// Uniform initialization in `±scheme.bound(fan_in)`.
pub fn uniform_init(
    shape: &[usize],
    fan_in: usize,
    scheme: InitScheme,
    rng: &mut impl rand::Rng,
) -> Tensor {
    let bound = scheme.bound(fan_in);
    let n = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n).map(|_| rng.random_range(-bound..bound)).collect(),
    }
}
