use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stft::MagnitudeGrid;
use super::SegmentRef;
use crate::error::{HkgError, Result};

/// Zero magnitudes are clamped to this fraction of the maximum before the
/// log, which puts the floor at -120 dB.
pub const LOG_FLOOR_RATIO: f64 = 1e-12;

pub const CHANNELS: usize = 3;

/// A `height x width x 3` log-magnitude image in dB (all values `<= 0`).
/// Stored channel-major: plane `c` occupies `data[c*h*w..(c+1)*h*w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    pub leaf_class: String,
    pub source_segment: SegmentRef,
}

impl Spectrogram {
    /// Build from a single plane replicated into every channel.
    pub fn from_plane(height: usize, width: usize, plane: Vec<f64>) -> Result<Self> {
        if plane.len() != height * width {
            return Err(HkgError::shape(
                "spectrogram",
                &[height, width],
                &[plane.len()],
            ));
        }
        let mut data = Vec::with_capacity(plane.len() * CHANNELS);
        for _ in 0..CHANNELS {
            data.extend_from_slice(&plane);
        }
        Ok(Spectrogram {
            height,
            width,
            data,
            leaf_class: String::new(),
            source_segment: SegmentRef::default(),
        })
    }

    pub fn with_source(mut self, leaf_class: impl Into<String>, source: SegmentRef) -> Self {
        self.leaf_class = leaf_class.into();
        self.source_segment = source;
        self
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[channel * self.height * self.width + row * self.width + col]
    }

    fn map_planes(&self, height: usize, width: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for c in 0..CHANNELS {
            data.extend(f(self.plane(c)));
        }
        Spectrogram {
            height,
            width,
            data,
            leaf_class: self.leaf_class.clone(),
            source_segment: self.source_segment.clone(),
        }
    }

    /// Channel 0 as row-major CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for r in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|c| self.get(r, c, 0).to_string())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| HkgError::io(path, e))
    }

    /// Channel 0 as an 8-bit binary PGM; `[min, 0] dB` maps to `[0, 255]`.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let plane = self.plane(0);
        let min = plane.iter().cloned().fold(f64::INFINITY, f64::min);
        let span = if min < 0.0 { -min } else { 1.0 };
        let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend(
            plane
                .iter()
                .map(|&v| (((v - min) / span) * 255.0).round().clamp(0.0, 255.0) as u8),
        );
        let mut f = std::fs::File::create(path).map_err(|e| HkgError::io(path, e))?;
        f.write_all(&bytes).map_err(|e| HkgError::io(path, e))
    }
}

/// `10*log10(mag / max(mag))`, replicated into three identical channels.
pub fn to_log_spectrogram(mag: &MagnitudeGrid) -> Result<Spectrogram> {
    let max = mag.data.iter().cloned().fold(0.0_f64, f64::max);
    if !max.is_finite() || max <= 0.0 {
        return Err(HkgError::DegenerateInput(
            "magnitude grid has no strictly positive finite element".into(),
        ));
    }
    let floor = LOG_FLOOR_RATIO * max;
    let plane = mag
        .data
        .iter()
        .map(|&m| 10.0 * (m.max(floor) / max).log10())
        .collect();
    Spectrogram::from_plane(mag.rows, mag.cols, plane)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augment {
    /// Reverse the column (frequency) axis.
    FlipH,
    /// Reverse the row (time) axis.
    FlipV,
    Rot180,
}

/// Apply the given axis reversals in order.
pub fn augment(spec: &Spectrogram, ops: &[Augment]) -> Spectrogram {
    let mut out = spec.clone();
    for op in ops {
        out = apply_one(&out, *op);
    }
    out
}

fn apply_one(spec: &Spectrogram, op: Augment) -> Spectrogram {
    let (h, w) = (spec.height, spec.width);
    let (flip_rows, flip_cols) = match op {
        Augment::FlipH => (false, true),
        Augment::FlipV => (true, false),
        Augment::Rot180 => (true, true),
    };
    spec.map_planes(h, w, |plane| {
        let mut out = Vec::with_capacity(plane.len());
        for r in 0..h {
            let sr = if flip_rows { h - 1 - r } else { r };
            for c in 0..w {
                let sc = if flip_cols { w - 1 - c } else { c };
                out.push(plane[sr * w + sc]);
            }
        }
        out
    })
}

/// Bilinear resize with corner-aligned sampling: output pixel `i` samples the
/// source at `i * (in - 1) / (out - 1)`. A size-1 axis samples the centre.
pub fn resize(spec: &Spectrogram, height: usize, width: usize) -> Result<Spectrogram> {
    if height == 0 || width == 0 {
        return Err(HkgError::Parameter(format!(
            "resize target must be >= 1, got {height}x{width}"
        )));
    }
    if height == spec.height && width == spec.width {
        return Ok(spec.clone());
    }
    let rows = axis_weights(spec.height, height);
    let cols = axis_weights(spec.width, width);
    let w_in = spec.width;
    Ok(spec.map_planes(height, width, |plane| {
        let mut out = Vec::with_capacity(height * width);
        for &(r0, r1, fr) in &rows {
            for &(c0, c1, fc) in &cols {
                let top = plane[r0 * w_in + c0] * (1.0 - fc) + plane[r0 * w_in + c1] * fc;
                let bottom = plane[r1 * w_in + c0] * (1.0 - fc) + plane[r1 * w_in + c1] * fc;
                out.push(top * (1.0 - fr) + bottom * fr);
            }
        }
        out
    }))
}

/// For each output index: (lower source index, upper source index, fraction).
fn axis_weights(len_in: usize, len_out: usize) -> Vec<(usize, usize, f64)> {
    (0..len_out)
        .map(|i| {
            let pos = if len_out == 1 {
                (len_in - 1) as f64 / 2.0
            } else {
                i as f64 * (len_in - 1) as f64 / (len_out - 1) as f64
            };
            let lo = (pos.floor() as usize).min(len_in - 1);
            let hi = (lo + 1).min(len_in - 1);
            let frac = if hi == lo { 0.0 } else { pos - lo as f64 };
            (lo, hi, frac)
        })
        .collect()
}
