//! Synthetic cavitation streams. Each stream gets a valve operating point
//! consistent with its class (so the pressure-ratio rules reproduce the
//! label) and an acoustic signature: band-limited Gaussian noise plus
//! Poisson-timed, exponentially decaying broadband bursts over a white floor.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HkgError, Result};
use crate::signal::{io::write_stream, FftPlan, RawStream};

/// Pressures in bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValveOperatingPoint {
    pub p_u: f64,
    pub p_d: f64,
    pub p_min: f64,
    pub p_v: f64,
}

impl ValveOperatingPoint {
    pub fn validate(&self) -> Result<()> {
        let all = [self.p_u, self.p_d, self.p_min, self.p_v];
        if all.iter().any(|p| !p.is_finite()) {
            return Err(HkgError::Physics(format!(
                "non-finite pressure in {self:?}"
            )));
        }
        if self.p_u <= self.p_d || self.p_u <= self.p_min {
            return Err(HkgError::Physics(format!(
                "upstream pressure must exceed downstream and minimum pressure: {self:?}"
            )));
        }
        if self.p_v < 0.0 {
            return Err(HkgError::Physics(format!(
                "vapor pressure must be >= 0, got {}",
                self.p_v
            )));
        }
        Ok(())
    }
}

/// `(X_FZ, X_F)`: the cavitation coefficient `(p_u - p_d)/(p_u - p_min)` and
/// the operating pressure ratio `(p_u - p_d)/(p_u - p_v)`.
pub fn cavitation_coefficients(op: &ValveOperatingPoint) -> Result<(f64, f64)> {
    let internal = op.p_u - op.p_min;
    let to_vapor = op.p_u - op.p_v;
    if internal == 0.0 || to_vapor == 0.0 {
        return Err(HkgError::Physics(format!(
            "zero pressure difference in {op:?}"
        )));
    }
    let external = op.p_u - op.p_d;
    Ok((external / internal, external / to_vapor))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowRegime {
    NoCavitation,
    Incipient,
    Constant,
    Choked,
    Flashing,
}

impl FlowRegime {
    /// Leaf of the cavitation tree used as the label. Flashing has no class of
    /// its own and is folded into choked flow.
    pub fn leaf_name(self) -> &'static str {
        match self {
            FlowRegime::NoCavitation => "non-cavitation",
            FlowRegime::Incipient => "incipient cavitation",
            FlowRegime::Constant => "constant cavitation",
            FlowRegime::Choked | FlowRegime::Flashing => "choked flow cavitation",
        }
    }
}

pub const DEFAULT_INCIPIENT_BAND: f64 = 0.02;

/// Fraction of `(X_FZ, 1]` below which developed cavitation counts as
/// constant rather than choked.
pub const CHOKED_FROM: f64 = 2.0 / 3.0;

/// Classify an operating point by its pressure ratios:
/// `X_F > 1` flashing; `X_F < X_FZ` no cavitation; `X_F` within
/// `incipient_band` above `X_FZ` incipient; otherwise constant or choked by
/// how far `X_F` has moved from `X_FZ` towards 1.
pub fn regime(x_fz: f64, x_f: f64, incipient_band: f64) -> FlowRegime {
    if x_f > 1.0 {
        FlowRegime::Flashing
    } else if x_f < x_fz {
        FlowRegime::NoCavitation
    } else if x_f - x_fz <= incipient_band {
        FlowRegime::Incipient
    } else if (x_f - x_fz) / (1.0 - x_fz) <= CHOKED_FROM {
        FlowRegime::Constant
    } else {
        FlowRegime::Choked
    }
}

/// Acoustic signature of one leaf class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSignature {
    pub leaf: String,
    pub streams: usize,
    /// Pass band of the Gaussian background, Hz.
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    /// RMS of the band-limited background.
    pub noise_rms: f64,
    /// Mean burst rate, Hz.
    pub burst_rate_hz: f64,
    pub burst_amplitude: f64,
    /// Decay time constant of a burst, s.
    pub burst_decay_s: f64,
    /// Upstream pressure of the simulated rig, bar.
    pub upstream_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate: f64,
    /// RMS of the white floor added to every stream.
    pub floor_rms: f64,
    pub vapor_pressure_bar: f64,
    pub incipient_band: f64,
    pub test_fraction: f64,
    /// Fraction of the non-test streams held out for validation.
    pub val_fraction: f64,
    pub classes: Vec<ClassSignature>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let sig = |leaf: &str, high: f64, rms: f64, rate: f64, amp: f64, pu: f64| ClassSignature {
            leaf: leaf.into(),
            streams: 20,
            band_low_hz: 50.0,
            band_high_hz: high,
            noise_rms: rms,
            burst_rate_hz: rate,
            burst_amplitude: amp,
            burst_decay_s: 0.002,
            upstream_bar: pu,
        };
        SyntheticSpec {
            seed: 7,
            duration_s: 1.0,
            sample_rate: 31_250.0,
            floor_rms: 0.05,
            // Water at about 25 C.
            vapor_pressure_bar: 0.0317,
            incipient_band: DEFAULT_INCIPIENT_BAND,
            test_fraction: 0.2,
            val_fraction: 0.2,
            classes: vec![
                sig("non-cavitation", 2_000.0, 1.0, 0.0, 0.0, 10.0),
                sig("incipient cavitation", 4_000.0, 1.0, 4.0, 2.0, 9.0),
                sig("constant cavitation", 7_000.0, 1.2, 20.0, 3.0, 6.0),
                sig("choked flow cavitation", 11_000.0, 1.5, 60.0, 4.0, 4.0),
            ],
        }
    }
}

impl SyntheticSpec {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HkgError::io(path, e))?;
        let spec: SyntheticSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate / 2.0;
        if !(self.sample_rate > 0.0 && self.duration_s > 0.0) {
            return Err(HkgError::Parameter(
                "sample_rate and duration_s must be > 0".into(),
            ));
        }
        if (self.duration_s * self.sample_rate).round() < 1.0 {
            return Err(HkgError::Parameter("streams would have no samples".into()));
        }
        if self.classes.is_empty() {
            return Err(HkgError::Parameter("no classes".into()));
        }
        for c in &self.classes {
            if c.streams == 0 {
                return Err(HkgError::Parameter(format!(
                    "{}: stream count must be > 0",
                    c.leaf
                )));
            }
            if !(0.0 <= c.band_low_hz && c.band_low_hz < c.band_high_hz && c.band_high_hz < nyquist)
            {
                return Err(HkgError::Parameter(format!(
                    "{}: band [{}, {}] Hz must be increasing and below Nyquist {nyquist} Hz",
                    c.leaf, c.band_low_hz, c.band_high_hz
                )));
            }
            if c.burst_rate_hz < 0.0
                || c.burst_amplitude < 0.0
                || c.noise_rms < 0.0
                || c.burst_decay_s <= 0.0
            {
                return Err(HkgError::Parameter(format!(
                    "{}: negative signature parameter",
                    c.leaf
                )));
            }
            if c.upstream_bar <= self.vapor_pressure_bar {
                return Err(HkgError::Parameter(format!(
                    "{}: upstream pressure must exceed vapor pressure",
                    c.leaf
                )));
            }
            regime_of_leaf(&c.leaf)?;
        }
        if !(0.0..1.0).contains(&self.test_fraction) || !(0.0..1.0).contains(&self.val_fraction) {
            return Err(HkgError::Parameter(
                "split fractions must be in [0, 1)".into(),
            ));
        }
        if !(self.incipient_band >= 0.0 && self.incipient_band < 0.3) {
            return Err(HkgError::Parameter(
                "incipient_band must be in [0, 0.3)".into(),
            ));
        }
        Ok(())
    }

    pub fn samples_per_stream(&self) -> usize {
        (self.duration_s * self.sample_rate).round() as usize
    }

    fn signature(&self, leaf: &str) -> Result<&ClassSignature> {
        self.classes
            .iter()
            .find(|c| c.leaf == leaf)
            .ok_or_else(|| HkgError::Label(format!("no signature for class `{leaf}`")))
    }
}

fn regime_of_leaf(leaf: &str) -> Result<FlowRegime> {
    [
        FlowRegime::NoCavitation,
        FlowRegime::Incipient,
        FlowRegime::Constant,
        FlowRegime::Choked,
    ]
    .into_iter()
    .find(|r| r.leaf_name() == leaf)
    .ok_or_else(|| HkgError::Label(format!("`{leaf}` is not a cavitation leaf")))
}

/// Draw an operating point whose ratios fall inside `target`'s regime.
/// Also returns the relative position inside that regime's interval in `[0,1]`.
pub fn sample_operating_point(
    target: FlowRegime,
    upstream_bar: f64,
    vapor_pressure_bar: f64,
    incipient_band: f64,
    rng: &mut impl Rng,
) -> (ValveOperatingPoint, f64) {
    let x_fz: f64 = rng.random_range(0.5..0.7);
    let u: f64 = rng.random_range(0.05..0.95);
    let span = 1.0 - x_fz;
    let x_f = match target {
        FlowRegime::NoCavitation => x_fz * (0.3 + 0.65 * u),
        FlowRegime::Incipient => x_fz + incipient_band * u,
        FlowRegime::Constant => {
            let lo = x_fz + incipient_band;
            let hi = x_fz + CHOKED_FROM * span;
            lo + (hi - lo) * u
        }
        FlowRegime::Choked => x_fz + span * (CHOKED_FROM + (1.0 - CHOKED_FROM) * u),
        FlowRegime::Flashing => 1.0 + 0.2 * u,
    };
    let p_u = upstream_bar;
    let p_v = vapor_pressure_bar;
    let p_d = p_u - x_f * (p_u - p_v);
    let p_min = p_u - (p_u - p_d) / x_fz;
    (
        ValveOperatingPoint {
            p_u,
            p_d,
            p_min,
            p_v,
        },
        u,
    )
}

fn stream_rng(seed: u64, class_idx: usize, stream_idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class_idx as u64) << 32) | stream_idx as u64);
    rng
}

/// Gaussian noise with every DFT bin outside `[low, high]` Hz removed,
/// scaled to the requested RMS.
fn band_noise(
    n: usize,
    rate: f64,
    low: f64,
    high: f64,
    rms: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
        .collect();
    let plan = FftPlan::new(n)?;
    plan.forward(&mut buf)?;
    for (k, v) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = bin as f64 * rate / n as f64;
        if f < low || f > high {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    plan.inverse(&mut buf)?;
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let cur = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if cur > 0.0 {
        out.iter_mut().for_each(|v| *v *= rms / cur);
    }
    Ok(out)
}

/// Add bursts at Poisson arrival times; returns how many were placed.
fn add_bursts(
    out: &mut [f64],
    rate_hz: f64,
    sample_rate: f64,
    amplitude: f64,
    decay_s: f64,
    rng: &mut impl Rng,
) -> usize {
    if rate_hz <= 0.0 || amplitude <= 0.0 {
        return 0;
    }
    let gaps = Exp::new(rate_hz).expect("positive rate");
    let len = (5.0 * decay_s * sample_rate).ceil() as usize;
    let mut t = gaps.sample(rng);
    let mut count = 0;
    while ((t * sample_rate) as usize) < out.len() {
        let start = (t * sample_rate) as usize;
        for (i, v) in out[start..].iter_mut().take(len).enumerate() {
            let env = (-(i as f64) / (decay_s * sample_rate)).exp();
            let carrier: f64 = rng.sample(StandardNormal);
            *v += amplitude * env * carrier;
        }
        count += 1;
        t += gaps.sample(rng);
    }
    count
}

/// One stream plus the operating point it was drawn at.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStream {
    pub stream: RawStream,
    pub operating_point: ValveOperatingPoint,
    pub bursts: usize,
}

/// Deterministically synthesize a stream of `leaf_class` from `seed`.
pub fn synth_stream(leaf_class: &str, spec: &SyntheticSpec, seed: u64) -> Result<SyntheticStream> {
    spec.validate()?;
    let sig = spec.signature(leaf_class)?;
    let class_idx = spec
        .classes
        .iter()
        .position(|c| c.leaf == leaf_class)
        .expect("signature found");
    synth_indexed(
        spec,
        class_idx,
        seed,
        format!("{}-s{seed}", slug(leaf_class)),
        sig,
    )
}

fn synth_indexed(
    spec: &SyntheticSpec,
    class_idx: usize,
    stream_idx: u64,
    stream_id: String,
    sig: &ClassSignature,
) -> Result<SyntheticStream> {
    let mut rng = stream_rng(spec.seed, class_idx, stream_idx as usize);
    let target = regime_of_leaf(&sig.leaf)?;
    let (op, position) = sample_operating_point(
        target,
        sig.upstream_bar,
        spec.vapor_pressure_bar,
        spec.incipient_band,
        &mut rng,
    );
    let n = spec.samples_per_stream();
    let mut samples = band_noise(
        n,
        spec.sample_rate,
        sig.band_low_hz,
        sig.band_high_hz,
        sig.noise_rms,
        &mut rng,
    )?;
    // Deeper inside the regime, slightly more frequent bursts.
    let rate = sig.burst_rate_hz * (0.75 + 0.5 * position);
    let bursts = add_bursts(
        &mut samples,
        rate,
        spec.sample_rate,
        sig.burst_amplitude,
        sig.burst_decay_s,
        &mut rng,
    );
    for v in &mut samples {
        let floor: f64 = rng.sample(StandardNormal);
        *v += spec.floor_rms * floor;
    }
    Ok(SyntheticStream {
        stream: RawStream::new(samples, spec.sample_rate, &sig.leaf, stream_id)?,
        operating_point: op,
        bursts,
    })
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub leaf: String,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub spec: SyntheticSpec,
    pub classes: Vec<ClassSplit>,
}

impl Manifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HkgError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Per-leaf stream counts in one split.
    pub fn counts(&self, split: Split) -> Vec<(String, usize)> {
        self.classes
            .iter()
            .map(|c| {
                let n = match split {
                    Split::Train => c.train.len(),
                    Split::Val => c.val.len(),
                    Split::Test => c.test.len(),
                };
                (c.leaf.clone(), n)
            })
            .collect()
    }
}

/// Stream-level sizes `(train, val, test)` for `n` streams of one class.
pub fn split_sizes(
    n: usize,
    test_fraction: f64,
    val_fraction: f64,
) -> Result<(usize, usize, usize)> {
    if n < 2 {
        return Err(HkgError::Split(format!(
            "need at least 2 streams per class, got {n}"
        )));
    }
    let test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let rest = n - test;
    let val = if rest >= 2 {
        ((rest as f64 * val_fraction).round() as usize).clamp(1, rest - 1)
    } else {
        0
    };
    Ok((rest - val, val, test))
}

/// Generate every stream, split each class at stream level and write
/// `<root>/{train,val,test}/<leaf>/<id>.csv`, `manifest.json` and `regimes.csv`.
pub fn make_dataset(spec: &SyntheticSpec, root: &Path) -> Result<Manifest> {
    spec.validate()?;
    let mut classes = Vec::new();
    let mut regimes =
        String::from("stream_id,leaf,split,p_u,p_d,p_min,p_v,x_fz,x_f,regime,bursts\n");
    for (ci, sig) in spec.classes.iter().enumerate() {
        let (n_train, n_val, _) = split_sizes(sig.streams, spec.test_fraction, spec.val_fraction)?;
        let mut order: Vec<usize> = (0..sig.streams).collect();
        let mut rng = stream_rng(spec.seed, ci, u32::MAX as usize);
        order.shuffle(&mut rng);
        let mut split = ClassSplit {
            leaf: sig.leaf.clone(),
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for (rank, &si) in order.iter().enumerate() {
            let which = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            let id = format!("{}-{si:03}", slug(&sig.leaf));
            let s = synth_indexed(spec, ci, si as u64, id.clone(), sig)?;
            write_stream(&root.join(which.dir_name()), &s.stream)?;
            let (x_fz, x_f) = cavitation_coefficients(&s.operating_point)?;
            let r = regime(x_fz, x_f, spec.incipient_band);
            if r == FlowRegime::Flashing {
                log::info!(
                    "{id}: flashing operating point labeled as {}",
                    r.leaf_name()
                );
            }
            let op = s.operating_point;
            let _ = writeln!(
                regimes,
                "{id},{},{},{},{},{},{},{},{},{},{}",
                sig.leaf,
                which.dir_name(),
                op.p_u,
                op.p_d,
                op.p_min,
                op.p_v,
                x_fz,
                x_f,
                serde_json::to_value(r)?.as_str().unwrap_or_default(),
                s.bursts
            );
            match which {
                Split::Train => split.train.push(id),
                Split::Val => split.val.push(id),
                Split::Test => split.test.push(id),
            }
        }
        split.train.sort();
        split.val.sort();
        split.test.sort();
        classes.push(split);
    }
    let manifest = Manifest {
        seed: spec.seed,
        spec: spec.clone(),
        classes,
    };
    let mpath = root.join(Manifest::FILE);
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| HkgError::io(&mpath, e))?;
    let rpath = root.join("regimes.csv");
    std::fs::write(&rpath, regimes).map_err(|e| HkgError::io(&rpath, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        let mut s = SyntheticSpec {
            duration_s: 0.1,
            ..SyntheticSpec::default()
        };
        for c in &mut s.classes {
            c.streams = 3;
        }
        s
    }

    #[test]
    fn coefficient_example() {
        let op = ValveOperatingPoint {
            p_u: 10.0,
            p_d: 4.0,
            p_min: 2.0,
            p_v: 0.023,
        };
        let (x_fz, x_f) = cavitation_coefficients(&op).unwrap();
        assert!((x_fz - 0.75).abs() < 1e-15);
        assert!((x_f - 6.0 / 9.977).abs() < 1e-15);
        assert!((x_f - 0.6014).abs() < 1e-4);
        assert_eq!(
            regime(x_fz, x_f, DEFAULT_INCIPIENT_BAND),
            FlowRegime::NoCavitation
        );
    }

    #[test]
    fn equal_denominators_give_equal_ratios() {
        let op = ValveOperatingPoint {
            p_u: 7.0,
            p_d: 3.0,
            p_min: 0.5,
            p_v: 0.5,
        };
        let (a, b) = cavitation_coefficients(&op).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_denominator_is_physics_error() {
        let op = ValveOperatingPoint {
            p_u: 1.0,
            p_d: 0.5,
            p_min: 0.2,
            p_v: 1.0,
        };
        assert!(matches!(
            cavitation_coefficients(&op),
            Err(HkgError::Physics(_))
        ));
    }

    #[test]
    fn regime_rules() {
        assert_eq!(regime(0.75, 0.75, 0.02), FlowRegime::Incipient);
        assert_eq!(regime(0.6, 1.2, 0.02), FlowRegime::Flashing);
        assert_eq!(regime(0.6, 0.59, 0.02), FlowRegime::NoCavitation);
        assert_eq!(regime(0.6, 0.7, 0.02), FlowRegime::Constant);
        assert_eq!(regime(0.6, 0.95, 0.02), FlowRegime::Choked);
        assert_eq!(regime(0.6, 1.0, 0.02), FlowRegime::Choked);
    }

    #[test]
    fn sampled_points_land_in_their_regime() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for target in [
            FlowRegime::NoCavitation,
            FlowRegime::Incipient,
            FlowRegime::Constant,
            FlowRegime::Choked,
            FlowRegime::Flashing,
        ] {
            for _ in 0..200 {
                let (op, _) = sample_operating_point(target, 6.0, 0.0317, 0.02, &mut rng);
                op.validate().unwrap();
                let (x_fz, x_f) = cavitation_coefficients(&op).unwrap();
                assert_eq!(regime(x_fz, x_f, 0.02), target, "{op:?}");
            }
        }
    }

    #[test]
    fn streams_are_deterministic() {
        let spec = small_spec();
        let a = synth_stream("constant cavitation", &spec, 3).unwrap();
        let b = synth_stream("constant cavitation", &spec, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.stream.len(), 3125);
    }

    #[test]
    fn non_cavitation_has_no_bursts() {
        let s = synth_stream("non-cavitation", &small_spec(), 0).unwrap();
        assert_eq!(s.bursts, 0);
    }

    #[test]
    fn choked_louder_than_incipient() {
        let spec = SyntheticSpec::default();
        let ms = |s: &RawStream| s.samples.iter().map(|v| v * v).sum::<f64>() / s.len() as f64;
        for seed in 0..5 {
            let inc = synth_stream("incipient cavitation", &spec, seed).unwrap();
            let cho = synth_stream("choked flow cavitation", &spec, seed).unwrap();
            assert!(ms(&cho.stream) > ms(&inc.stream));
        }
    }

    #[test]
    fn band_above_nyquist_rejected() {
        let mut spec = small_spec();
        spec.classes[0].band_high_hz = 20_000.0;
        assert!(matches!(spec.validate(), Err(HkgError::Parameter(_))));
    }

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_sizes(10, 0.2, 0.2).unwrap(), (6, 2, 2));
        assert_eq!(split_sizes(20, 0.2, 0.2).unwrap(), (13, 3, 4));
        assert_eq!(split_sizes(2, 0.2, 0.2).unwrap(), (1, 0, 1));
        assert!(matches!(split_sizes(1, 0.2, 0.2), Err(HkgError::Split(_))));
    }

    #[test]
    fn dataset_on_disk_is_reproducible_and_disjoint() {
        let spec = small_spec();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = make_dataset(&spec, a.path()).unwrap();
        make_dataset(&spec, b.path()).unwrap();
        let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
        assert_eq!(
            read(a.path(), "manifest.json"),
            read(b.path(), "manifest.json")
        );
        assert_eq!(read(a.path(), "regimes.csv"), read(b.path(), "regimes.csv"));
        for c in &ma.classes {
            assert_eq!((c.train.len(), c.val.len(), c.test.len()), (1, 1, 1));
            for id in &c.test {
                assert!(!c.train.contains(id) && !c.val.contains(id));
            }
        }
        let test = crate::signal::io::read_stream_dir(&a.path().join("test")).unwrap();
        assert_eq!(test.len(), 4);
    }
}
