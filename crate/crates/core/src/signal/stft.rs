use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::FftPlan;
use super::Segment;
use crate::error::{HkgError, Result};

/// Taper applied to each frame before the DFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFn {
    /// Periodic Hann.
    #[default]
    Hann,
    /// Periodic Hamming.
    Hamming,
    Rectangular,
}

impl WindowFn {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / n;
                match self {
                    WindowFn::Hann => 0.5 - 0.5 * phase.cos(),
                    WindowFn::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowFn::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

impl std::str::FromStr for WindowFn {
    type Err = HkgError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hann" => Ok(WindowFn::Hann),
            "hamming" => Ok(WindowFn::Hamming),
            "rectangular" | "rect" | "boxcar" => Ok(WindowFn::Rectangular),
            other => Err(HkgError::Parameter(format!(
                "unknown window function {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub win_len: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: WindowFn,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig::with_window_len(2048)
    }
}

impl StftConfig {
    /// Hop of one quarter of the window length.
    pub fn with_window_len(win_len: usize) -> Self {
        StftConfig {
            win_len,
            hop: (win_len / 4).max(1),
            window: WindowFn::Hann,
        }
    }

    pub fn frame_count(&self, len: usize) -> Result<usize> {
        if self.hop == 0 {
            return Err(HkgError::Parameter("STFT hop must be > 0".into()));
        }
        if self.win_len == 0 || self.win_len > len {
            return Err(HkgError::Parameter(format!(
                "STFT window length {} invalid for segment of {len} samples",
                self.win_len
            )));
        }
        Ok((len - self.win_len) / self.hop + 1)
    }

    /// One-sided bin count.
    pub fn bin_count(&self) -> usize {
        self.win_len / 2 + 1
    }
}

/// Row-major `frames x bins` complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

/// Row-major `rows x cols` nonnegative matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeGrid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ComplexGrid {
    pub fn get(&self, frame: usize, bin: usize) -> Complex64 {
        self.data[frame * self.bins + bin]
    }

    pub fn magnitude(&self) -> MagnitudeGrid {
        MagnitudeGrid {
            rows: self.frames,
            cols: self.bins,
            data: self.data.iter().map(|c| c.norm()).collect(),
        }
    }
}

impl MagnitudeGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(HkgError::shape(
                "magnitude grid",
                &[rows, cols],
                &[data.len()],
            ));
        }
        Ok(MagnitudeGrid { rows, cols, data })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

/// Short-time Fourier transform of a segment. Row `t` holds the one-sided DFT
/// of the tapered frame starting at `t * hop`.
pub fn stft(segment: &Segment<'_>, config: &StftConfig) -> Result<ComplexGrid> {
    stft_samples(segment.samples, config)
}

pub(crate) fn stft_samples(samples: &[f64], config: &StftConfig) -> Result<ComplexGrid> {
    let frames = config.frame_count(samples.len())?;
    let bins = config.bin_count();
    let taper = config.window.coefficients(config.win_len);
    let plan = FftPlan::new(config.win_len)?;
    let mut buf = vec![Complex64::new(0.0, 0.0); config.win_len];
    let mut data = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let start = t * config.hop;
        for ((b, &x), &w) in buf
            .iter_mut()
            .zip(&samples[start..start + config.win_len])
            .zip(&taper)
        {
            *b = Complex64::new(x * w, 0.0);
        }
        plan.forward(&mut buf)?;
        data.extend_from_slice(&buf[..bins]);
    }
    Ok(ComplexGrid { frames, bins, data })
}
