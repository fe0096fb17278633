use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{HkgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
        }
    }
}

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub config: SgdConfig,
    pub momentum_buffers: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(config: SgdConfig, params: &[Tensor]) -> Self {
        Sgd {
            config,
            momentum_buffers: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// `v <- m*v + g + wd*p; p <- p - lr*v`. Nothing is modified when any
    /// gradient is non-finite.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.momentum_buffers.len() {
            return Err(HkgError::shape(
                "sgd_step",
                &[params.len(), self.momentum_buffers.len()],
                &[grads.len()],
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != g.len() || self.momentum_buffers[i].len() != g.len() {
                return Err(HkgError::shape("sgd_step", &p.shape, &[g.len()]));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(HkgError::Divergence(format!(
                    "non-finite gradient for parameter {i}"
                )));
            }
        }
        let SgdConfig {
            lr,
            momentum,
            weight_decay,
        } = self.config;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.momentum_buffers) {
            for ((p, g), v) in p.data.iter_mut().zip(g).zip(v.iter_mut()) {
                *v = momentum * *v + g + weight_decay * *p;
                *p -= lr * *v;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub best_metric: f64,
    pub epochs_since_improve: usize,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
}

/// Reduce-on-plateau: lower the learning rate when the monitored value stops
/// decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub state: SchedulerState,
}

impl Default for PlateauScheduler {
    fn default() -> Self {
        PlateauScheduler::new(0.1, 5, 1e-5).expect("valid defaults")
    }
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize, min_lr: f64) -> Result<Self> {
        if !(factor > 0.0 && factor < 1.0) {
            return Err(HkgError::Parameter(format!(
                "plateau factor must be in (0,1), got {factor}"
            )));
        }
        if patience == 0 {
            return Err(HkgError::Parameter("plateau patience must be >= 1".into()));
        }
        if min_lr.is_nan() || min_lr < 0.0 {
            return Err(HkgError::Parameter(format!(
                "min_lr must be >= 0, got {min_lr}"
            )));
        }
        Ok(PlateauScheduler {
            state: SchedulerState {
                best_metric: f64::INFINITY,
                epochs_since_improve: 0,
                factor,
                patience,
                min_lr,
            },
        })
    }

    pub fn from_state(state: SchedulerState) -> Self {
        PlateauScheduler { state }
    }

    /// Record one epoch's metric and return the learning rate to use next.
    pub fn step(&mut self, metric: f64, lr: f64) -> Result<f64> {
        if !metric.is_finite() {
            return Err(HkgError::Numeric(format!(
                "plateau metric is not finite: {metric}"
            )));
        }
        let s = &mut self.state;
        if metric < s.best_metric {
            s.best_metric = metric;
            s.epochs_since_improve = 0;
            return Ok(lr);
        }
        s.epochs_since_improve += 1;
        if s.epochs_since_improve >= s.patience {
            s.epochs_since_improve = 0;
            return Ok((lr * s.factor).max(s.min_lr));
        }
        Ok(lr)
    }
}
