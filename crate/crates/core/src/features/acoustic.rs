//! Log-mel and MFCC features from a single channel, plus SpecAugment-style
//! time/feature masking.

use ndarray::{s, Array2, Axis};
use rand::Rng;

use super::{FeatureKind, FeatureSequence};
use crate::array_sim::SAMPLE_RATE;
use crate::dsp::{SpectrogramTensor, N_FFT};
use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-10;
pub const LOG_MEL_BANDS: usize = 80;
pub const MFCC_BANDS: usize = 40;
pub const MFCC_COEFFS: usize = 20;
pub const MFCC_DIM: usize = (MFCC_COEFFS - 1) + 2 * MFCC_COEFFS;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters spaced uniformly in mel between 0 Hz and Nyquist,
/// each with unit peak. Shape `n_mels x (n_fft / 2 + 1)`.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Result<Array2<f64>> {
    let bins = n_fft / 2 + 1;
    if n_mels == 0 || n_mels > bins {
        return Err(Error::InvalidArgument(format!(
            "{n_mels} mel bands do not fit in {bins} bins"
        )));
    }
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut fb = Array2::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
    }
    Ok(fb)
}

/// Centre frequencies (Hz) of the filters built by [`mel_filterbank`].
pub fn mel_centers(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (1..=n_mels)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect()
}

fn log_mel_energies(spectra: &SpectrogramTensor, channel: usize, n_mels: usize) -> Result<Array2<f64>> {
    if channel >= spectra.channels() {
        return Err(Error::InvalidArgument(format!(
            "channel {channel} out of range for {} channels",
            spectra.channels()
        )));
    }
    let fb = mel_filterbank(n_mels, N_FFT, SAMPLE_RATE)?;
    let power = spectra.channel(channel).mapv(|v| v.norm_sqr());
    Ok(fb.dot(&power).mapv(|e| (e + LOG_FLOOR).ln()))
}

/// 80-band log-mel spectrogram of one channel.
pub fn log_mel(spectra: &SpectrogramTensor, channel: usize) -> Result<FeatureSequence> {
    let values = log_mel_energies(spectra, channel, LOG_MEL_BANDS)?;
    FeatureSequence::new(values.mapv(|v| v as f32), FeatureKind::LogMel)
}

/// Orthonormal DCT-II matrix, `D[k][n] = a_k cos(pi k (n + 1/2) / N)`.
pub fn dct_matrix(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(k, i)| {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        scale * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos()
    })
}

/// Regression deltas over +-2 frames with replicated edges.
pub fn deltas(x: &Array2<f64>) -> Array2<f64> {
    let t = x.ncols();
    let mut out = Array2::zeros(x.raw_dim());
    let at = |i: isize| i.clamp(0, t as isize - 1) as usize;
    for j in 0..t {
        let j = j as isize;
        let mut col = out.column_mut(j as usize);
        for n in 1..=2isize {
            let diff = &x.column(at(j + n)) - &x.column(at(j - n));
            col.scaled_add(n as f64 / 10.0, &diff);
        }
    }
    out
}

/// 59-dimensional MFCC stack: c1..c19, then deltas and delta-deltas of c0..c19.
pub fn mfcc(spectra: &SpectrogramTensor, channel: usize) -> Result<FeatureSequence> {
    if spectra.frames() < 5 {
        return Err(Error::InvalidArgument(format!(
            "MFCC deltas need at least 5 frames, got {}",
            spectra.frames()
        )));
    }
    let logmel = log_mel_energies(spectra, channel, MFCC_BANDS)?;
    let dct = dct_matrix(MFCC_BANDS);
    let ceps = dct.slice(s![..MFCC_COEFFS, ..]).dot(&logmel);
    let d1 = deltas(&ceps);
    let d2 = deltas(&d1);
    let values =
        ndarray::concatenate(Axis(0), &[ceps.slice(s![1.., ..]), d1.view(), d2.view()]).expect("same frame count");
    FeatureSequence::new(values.mapv(|v| v as f32), FeatureKind::Mfcc)
}

/// Masking augmentation settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MaskParams {
    pub time_masks: usize,
    pub max_time_width: usize,
    pub feature_masks: usize,
    pub max_feature_width: usize,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            time_masks: 2,
            max_time_width: 20,
            feature_masks: 2,
            max_feature_width: 10,
        }
    }
}

impl MaskParams {
    pub fn none() -> Self {
        Self {
            time_masks: 0,
            max_time_width: 0,
            feature_masks: 0,
            max_feature_width: 0,
        }
    }
}

/// Zeroes random time spans and feature-row spans of `rows` (all rows when
/// `None`). Widths are uniform in `0..=max`, so each mask may be empty.
pub fn mask_in_place<R: Rng + ?Sized>(
    values: &mut Array2<f32>,
    rows: std::ops::Range<usize>,
    params: &MaskParams,
    rng: &mut R,
) {
    let t = values.ncols();
    let f = rows.len();
    for _ in 0..params.time_masks {
        let width = rng.random_range(0..=params.max_time_width.min(t));
        let start = rng.random_range(0..=t - width);
        values.slice_mut(s![rows.clone(), start..start + width]).fill(0.0);
    }
    for _ in 0..params.feature_masks {
        let width = rng.random_range(0..=params.max_feature_width.min(f));
        let start = rows.start + rng.random_range(0..=f - width);
        values.slice_mut(s![start..start + width, ..]).fill(0.0);
    }
}

pub fn time_freq_mask<R: Rng + ?Sized>(
    features: &FeatureSequence,
    rng: &mut R,
    params: &MaskParams,
) -> Result<FeatureSequence> {
    if !matches!(features.kind(), FeatureKind::LogMel | FeatureKind::Mfcc) {
        return Err(Error::InvalidArgument(format!(
            "masking applies to acoustic features only, got {:?}",
            features.kind()
        )));
    }
    let mut values = features.values().clone();
    let rows = 0..values.nrows();
    mask_in_place(&mut values, rows, params, rng);
    FeatureSequence::new(values, features.kind())
}
