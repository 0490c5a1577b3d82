//! Uniform circular array geometry and free-field scene synthesis.
//!
//! Plane waves are rendered with a frequency-domain fractional delay: the
//! microphone at angle `psi` receives the source advanced by
//! `tau = r * cos(azimuth - psi) / c`, i.e. every bin is multiplied by
//! `exp(+j * 2 * pi * f * tau)`. Under this convention the circular-harmonic
//! coefficients of a plane wave are `S * j^n * J_n(kr) * exp(-j * n * azimuth)`,
//! which is what the DOA estimator in [`crate::features::spatial`] inverts.

use std::f64::consts::{PI, TAU};

use ndarray::{Array2, ArrayView1, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{AnnotationSet, Segment};

pub const SAMPLE_RATE: u32 = 16_000;
pub const SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_RADIUS: f64 = 0.1;
pub const DEFAULT_MICS: usize = 8;

/// Microphone layout on a circle, with a mask of which microphones are live.
///
/// Angles are kept for every microphone, including deactivated ones, so a
/// sub-array keeps the original positions of its survivors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    radius: f64,
    mic_angles: Vec<f64>,
    speed_of_sound: f64,
    active: Vec<bool>,
}

impl ArrayGeometry {
    /// Pristine UCA with `mic_count` microphones at `(m - 1) * 2pi / M`.
    pub fn uniform(mic_count: usize, radius: f64) -> Result<Self> {
        if mic_count == 0 {
            return Err(Error::Geometry("mic_count must be positive".into()));
        }
        let mic_angles = (0..mic_count).map(|m| m as f64 * TAU / mic_count as f64).collect();
        Self::new(radius, mic_angles, SPEED_OF_SOUND)
    }

    pub fn new(radius: f64, mic_angles: Vec<f64>, speed_of_sound: f64) -> Result<Self> {
        let active = vec![true; mic_angles.len()];
        let geometry = Self {
            radius,
            mic_angles,
            speed_of_sound,
            active,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn with_speed_of_sound(mut self, c: f64) -> Result<Self> {
        self.speed_of_sound = c;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        // r = 0 is allowed as a degenerate (co-located) array.
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(Error::Geometry(format!("radius {} must be >= 0", self.radius)));
        }
        if !(self.speed_of_sound > 0.0 && self.speed_of_sound.is_finite()) {
            return Err(Error::Geometry(format!(
                "speed of sound {} must be > 0",
                self.speed_of_sound
            )));
        }
        if self.mic_angles.is_empty() {
            return Err(Error::Geometry("no microphones".into()));
        }
        if self.active.len() != self.mic_angles.len() {
            return Err(Error::Geometry("active mask length differs from mic count".into()));
        }
        for (i, &a) in self.mic_angles.iter().enumerate() {
            if !(0.0..TAU).contains(&a) {
                return Err(Error::Geometry(format!("mic angle {a} outside [0, 2pi)")));
            }
            if i > 0 && a <= self.mic_angles[i - 1] {
                return Err(Error::Geometry("mic angles must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    /// Total number of microphones, live or not.
    pub fn mic_count(&self) -> usize {
        self.mic_angles.len()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn is_active(&self, mic: usize) -> bool {
        self.active.get(mic).copied().unwrap_or(false)
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    /// Original microphone indices of the live microphones, ascending.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| self.active[i]).collect()
    }

    /// Angles of the live microphones, in channel order.
    pub fn active_angles(&self) -> Vec<f64> {
        self.active_indices().into_iter().map(|i| self.mic_angles[i]).collect()
    }

    pub fn mic_angles(&self) -> &[f64] {
        &self.mic_angles
    }

    /// Channel position of microphone `mic` in a waveform recorded with this
    /// geometry, or `None` when it is deactivated.
    pub fn channel_of(&self, mic: usize) -> Option<usize> {
        if !self.is_active(mic) {
            return None;
        }
        Some(self.active[..mic].iter().filter(|&&a| a).count())
    }

    /// `k * r` for a frequency in Hz.
    pub fn kr(&self, freq_hz: f64) -> f64 {
        TAU * freq_hz / self.speed_of_sound * self.radius
    }
}

/// Synchronized sample streams, one row per live microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelWaveform {
    samples: Array2<f32>,
    sample_rate: u32,
    geometry: ArrayGeometry,
}

impl MultichannelWaveform {
    pub fn new(samples: Array2<f32>, sample_rate: u32, geometry: ArrayGeometry) -> Result<Self> {
        if samples.nrows() != geometry.active_count() {
            return Err(Error::DimMismatch {
                expected: geometry.active_count(),
                got: samples.nrows(),
            });
        }
        Ok(Self {
            samples,
            sample_rate,
            geometry,
        })
    }

    pub fn samples(&self) -> &Array2<f32> {
        &self.samples
    }

    pub fn channel(&self, ch: usize) -> ArrayView1<'_, f32> {
        self.samples.row(ch)
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    /// Samples `[start, start + len)`; positions past the end are zero.
    pub fn crop(&self, start: usize, len: usize) -> Self {
        let mut out = Array2::zeros((self.channels(), len));
        let end = (start + len).min(self.len());
        if start < end {
            out.slice_mut(ndarray::s![.., ..end - start])
                .assign(&self.samples.slice(ndarray::s![.., start..end]));
        }
        Self {
            samples: out,
            sample_rate: self.sample_rate,
            geometry: self.geometry.clone(),
        }
    }

    /// `self + gain * other`, sample by sample.
    pub fn mix(&self, other: &Self, gain: f32) -> Result<Self> {
        if self.channels() != other.channels() {
            return Err(Error::DimMismatch {
                expected: self.channels(),
                got: other.channels(),
            });
        }
        if self.len() != other.len() {
            return Err(Error::DimMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        let samples = &self.samples + &(&other.samples * gain);
        Ok(Self {
            samples,
            sample_rate: self.sample_rate,
            geometry: self.geometry.clone(),
        })
    }

    /// Mean power over all channels and samples.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / self.samples.len() as f64
    }
}

fn wrap_azimuth(azimuth: f64) -> f64 {
    let a = azimuth.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2pi for tiny negative inputs.
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Renders a far-field plane wave from `azimuth` on every live microphone.
pub fn synth_plane_wave(
    geometry: &ArrayGeometry,
    azimuth: f64,
    signal: &[f64],
    sample_rate: u32,
) -> Result<MultichannelWaveform> {
    if signal.is_empty() {
        return Err(Error::SignalTooShort { got: 0, need: 1 });
    }
    if signal.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("signal contains non-finite samples".into()));
    }
    let azimuth = wrap_azimuth(azimuth);
    let n = signal.len();
    let fs = sample_rate as f64;
    let max_shift = (geometry.radius() / geometry.speed_of_sound() * fs).ceil() as usize;
    let len = n + 2 * max_shift + 32;

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let ifft = planner.plan_fft_inverse(len);

    let mut spectrum: Vec<Complex64> = signal
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(len)
        .collect();
    fft.process(&mut spectrum);

    let angles = geometry.active_angles();
    let mut out = Array2::<f32>::zeros((angles.len(), n));
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (ch, &psi) in angles.iter().enumerate() {
        let tau = geometry.radius() * (azimuth - psi).cos() / geometry.speed_of_sound();
        for (k, (dst, &src)) in buf.iter_mut().zip(&spectrum).enumerate() {
            let freq = if 2 * k < len {
                k as f64 * fs / len as f64
            } else {
                (k as f64 - len as f64) * fs / len as f64
            };
            let phase = TAU * freq * tau;
            *dst = if 2 * k == len {
                // Nyquist bin must stay real for a real output.
                src * phase.cos()
            } else {
                src * Complex64::from_polar(1.0, phase)
            };
        }
        ifft.process(&mut buf);
        let scale = 1.0 / len as f64;
        for (dst, v) in out.row_mut(ch).iter_mut().zip(&buf) {
            *dst = (v.re * scale) as f32;
        }
    }
    MultichannelWaveform::new(out, sample_rate, geometry.clone())
}

/// Returns the sub-array made of the channels listed in `keep` (0-based
/// channel positions in `waveform`).
pub fn deactivate_channels(waveform: &MultichannelWaveform, keep: &[usize]) -> Result<MultichannelWaveform> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep_indices must be non-empty".into()));
    }
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&bad) = keep.iter().find(|&&k| k >= waveform.channels()) {
        return Err(Error::InvalidArgument(format!(
            "channel {bad} out of range for {} channels",
            waveform.channels()
        )));
    }
    if keep.len() < 3 {
        log::warn!(
            "only {} microphones kept; circular-harmonic features need at least 3",
            keep.len()
        );
    }
    let active = waveform.geometry().active_indices();
    let mut geometry = waveform.geometry().clone();
    geometry.active.iter_mut().for_each(|a| *a = false);
    for &ch in &keep {
        geometry.active[active[ch]] = true;
    }
    let samples = waveform.samples().select(Axis(0), &keep);
    MultichannelWaveform::new(samples, waveform.sample_rate(), geometry)
}

/// Source waveform family used by the scene generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalKind {
    WhiteNoise,
    Tone {
        freq: f64,
    },
    /// White noise under a 4 Hz syllable-rate amplitude envelope.
    SpeechLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub id: String,
    /// Radians, counter-clockwise from microphone 0.
    pub azimuth: f64,
    pub signal: SignalKind,
    /// `[start, end)` in seconds.
    pub intervals: Vec<[f64; 2]>,
    #[serde(default)]
    pub level_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    #[serde(default = "default_mics")]
    pub mics: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_c")]
    pub speed_of_sound: f64,
}

fn default_mics() -> usize {
    DEFAULT_MICS
}
fn default_radius() -> f64 {
    DEFAULT_RADIUS
}
fn default_c() -> f64 {
    SPEED_OF_SOUND
}

impl Default for ArraySpec {
    fn default() -> Self {
        Self {
            mics: DEFAULT_MICS,
            radius: DEFAULT_RADIUS,
            speed_of_sound: SPEED_OF_SOUND,
        }
    }
}

impl ArraySpec {
    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::uniform(self.mics, self.radius)?.with_speed_of_sound(self.speed_of_sound)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default = "default_recording_id")]
    pub recording_id: String,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Spatially white noise level relative to total source power, in dB.
    #[serde(default)]
    pub noise_snr: Option<f64>,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub array: ArraySpec,
}

fn default_recording_id() -> String {
    "scene".into()
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Scenario(format!("duration {} must be > 0", self.duration)));
        }
        for src in &self.sources {
            if !src.azimuth.is_finite() {
                return Err(Error::Scenario(format!("source {}: bad azimuth", src.id)));
            }
            let mut iv = src.intervals.clone();
            iv.sort_by(|a, b| a[0].total_cmp(&b[0]));
            for w in &iv {
                if !(0.0 <= w[0] && w[0] < w[1] && w[1] <= self.duration) {
                    return Err(Error::Scenario(format!(
                        "source {}: interval [{}, {}) outside [0, {})",
                        src.id, w[0], w[1], self.duration
                    )));
                }
            }
            for pair in iv.windows(2) {
                if pair[1][0] < pair[0][1] {
                    return Err(Error::Scenario(format!(
                        "source {}: overlapping intervals [{}, {}) and [{}, {})",
                        src.id, pair[0][0], pair[0][1], pair[1][0], pair[1][1]
                    )));
                }
            }
            if let SignalKind::Tone { freq } = src.signal {
                if !(freq > 0.0 && freq < SAMPLE_RATE as f64 / 2.0) {
                    return Err(Error::Scenario(format!("source {}: tone {freq} Hz", src.id)));
                }
            }
        }
        Ok(())
    }
}

fn source_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn mono_signal(kind: &SignalKind, n: usize, level_db: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let amp = 10f64.powf(level_db / 20.0);
    match *kind {
        SignalKind::WhiteNoise => (0..n).map(|_| amp * rng.sample::<f64, _>(StandardNormal)).collect(),
        SignalKind::Tone { freq } => (0..n)
            .map(|i| amp * 2f64.sqrt() * (TAU * freq * i as f64 / fs).sin())
            .collect(),
        SignalKind::SpeechLike => {
            let phase = rng.random::<f64>() * TAU;
            // Envelope 1 + 0.8 sin has mean square 1.32.
            let norm = 1.0 / 1.32f64.sqrt();
            (0..n)
                .map(|i| {
                    let env = 1.0 + 0.8 * (TAU * 4.0 * i as f64 / fs + phase).sin();
                    amp * norm * env * rng.sample::<f64, _>(StandardNormal)
                })
                .collect()
        }
    }
}

fn to_sample(t: f64) -> usize {
    (t * SAMPLE_RATE as f64).round() as usize
}

/// Renders a scene and its reference annotation. Deterministic in `spec.seed`.
pub fn gen_scenario(spec: &ScenarioSpec) -> Result<(MultichannelWaveform, AnnotationSet)> {
    spec.validate()?;
    let geometry = spec.array.geometry()?;
    let n = to_sample(spec.duration);
    let mut mix = Array2::<f32>::zeros((geometry.active_count(), n));
    let mut segments = Vec::new();

    for (idx, src) in spec.sources.iter().enumerate() {
        let mut rng = source_rng(spec.seed, idx);
        let mut mono = mono_signal(&src.signal, n, src.level_db, &mut rng);
        let mut gate = vec![false; n];
        for w in &src.intervals {
            let (a, b) = (to_sample(w[0]).min(n), to_sample(w[1]).min(n));
            gate[a..b].iter_mut().for_each(|g| *g = true);
            segments.push(Segment::new(&src.id, w[0], w[1]));
        }
        mono.iter_mut()
            .zip(&gate)
            .filter(|(_, &g)| !g)
            .for_each(|(x, _)| *x = 0.0);
        if src.intervals.is_empty() {
            continue;
        }
        let rendered = synth_plane_wave(&geometry, src.azimuth, &mono, SAMPLE_RATE)?;
        mix += rendered.samples();
    }

    let mut wave = MultichannelWaveform::new(mix, SAMPLE_RATE, geometry)?;
    if let Some(snr) = spec.noise_snr {
        let power = wave.power();
        if power > 0.0 {
            let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
            let mut rng = source_rng(spec.seed, usize::MAX - 1);
            wave.samples
                .iter_mut()
                .for_each(|x| *x += (sigma * rng.sample::<f64, _>(StandardNormal)) as f32);
        }
    }
    let annotations = AnnotationSet::new(&spec.recording_id, spec.duration, segments)?;
    Ok((wave, annotations))
}

/// Angle difference wrapped to `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}
