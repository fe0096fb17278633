//! Signal preprocessing: sliding-window segmentation, DFT/STFT, log-magnitude
//! spectrograms, augmentation and resizing.

mod fft;
pub mod io;
mod spectrogram;
mod stft;

pub use fft::{dft, idft, FftPlan};
pub use spectrogram::{
    augment, resize, to_log_spectrogram, Augment, Spectrogram, CHANNELS, LOG_FLOOR_RATIO,
};
pub use stft::{stft, ComplexGrid, MagnitudeGrid, StftConfig, WindowFn};

use serde::{Deserialize, Serialize};

use crate::error::{HkgError, Result};

/// A labeled, uniformly sampled 1-D signal.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStream {
    pub samples: Vec<f64>,
    /// Hz.
    pub sample_rate: f64,
    /// Name of the leaf class in the label tree.
    pub leaf_class: String,
    pub stream_id: String,
}

impl RawStream {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: f64,
        leaf_class: impl Into<String>,
        stream_id: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(HkgError::EmptyInput("stream has no samples".into()));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(HkgError::Parameter(format!(
                "sample_rate must be positive, got {sample_rate}"
            )));
        }
        Ok(RawStream {
            samples,
            sample_rate,
            leaf_class: leaf_class.into(),
            stream_id: stream_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// A window of a parent stream. Borrows the parent's samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<'a> {
    pub samples: &'a [f64],
    pub parent_stream: &'a str,
    pub offset: usize,
}

/// Where a spectrogram came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub stream_id: String,
    pub offset: usize,
}

impl Segment<'_> {
    pub fn to_ref(&self) -> SegmentRef {
        SegmentRef {
            stream_id: self.parent_stream.to_string(),
            offset: self.offset,
        }
    }
}

/// Number of full windows of `window` samples, advanced by `step`, that fit in
/// `len` samples. Trailing samples that do not fill a window are dropped.
pub fn segment_count(len: usize, window: usize, step: usize) -> Result<usize> {
    if window == 0 {
        return Err(HkgError::Parameter("window size must be > 0".into()));
    }
    if step == 0 {
        return Err(HkgError::Parameter("step size must be > 0".into()));
    }
    if window > len {
        return Err(HkgError::EmptyInput(format!(
            "window size {window} exceeds stream length {len}"
        )));
    }
    Ok((len - window) / step + 1)
}

/// Split a stream into fixed-size windows at offsets `0, step, 2*step, ...`.
pub fn slide_window(stream: &RawStream, window: usize, step: usize) -> Result<Vec<Segment<'_>>> {
    let count = segment_count(stream.len(), window, step)?;
    Ok((0..count)
        .map(|i| {
            let offset = i * step;
            Segment {
                samples: &stream.samples[offset..offset + window],
                parent_stream: &stream.stream_id,
                offset,
            }
        })
        .collect())
}

/// End-to-end preprocessing settings: segmentation, STFT and output size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Sliding-window length in samples.
    pub window: usize,
    /// Sliding-window step in samples.
    pub step: usize,
    pub stft: StftConfig,
    /// Output `(height, width)`.
    pub target: (usize, usize),
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.step == 0 {
            return Err(HkgError::Parameter("window and step must be > 0".into()));
        }
        if self.stft.win_len == 0 || self.stft.hop == 0 || self.stft.win_len > self.window {
            return Err(HkgError::Parameter(format!(
                "stft window {} must be in 1..={} with hop > 0",
                self.stft.win_len, self.window
            )));
        }
        if self.target.0 == 0 || self.target.1 == 0 {
            return Err(HkgError::Parameter("resize target must be >= 1".into()));
        }
        Ok(())
    }
}

/// Segment a stream and turn every segment into a resized log spectrogram.
pub fn preprocess_stream(
    stream: &RawStream,
    config: &PreprocessConfig,
) -> Result<Vec<Spectrogram>> {
    slide_window(stream, config.window, config.step)?
        .iter()
        .map(|seg| preprocess_segment(seg, &stream.leaf_class, config))
        .collect()
}

pub fn preprocess_segment(
    seg: &Segment<'_>,
    leaf_class: &str,
    config: &PreprocessConfig,
) -> Result<Spectrogram> {
    let mag = stft(seg, &config.stft)?.magnitude();
    let spec = to_log_spectrogram(&mag)?.with_source(leaf_class, seg.to_ref());
    resize(&spec, config.target.0, config.target.1)
}
