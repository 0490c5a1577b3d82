//! Shared multichannel STFT front-end.
//!
//! 25 ms Hann frames (400 samples), 10 ms hop (160 samples), zero-padded to
//! a 512-point transform, one-sided (257 bins), no centre padding. Acoustic
//! and spatial features are both computed from this one analysis so their
//! frames line up.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array3, ArrayView2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::array_sim::{ArrayGeometry, MultichannelWaveform, SAMPLE_RATE};
use crate::error::{Error, Result};

pub const WIN_LENGTH: usize = 400;
pub const HOP_LENGTH: usize = 160;
pub const N_FFT: usize = 512;
pub const N_BINS: usize = N_FFT / 2 + 1;
pub const BIN_HZ: f64 = SAMPLE_RATE as f64 / N_FFT as f64;

/// Number of frames produced for `samples` input samples.
pub fn frame_count(samples: usize) -> usize {
    if samples < WIN_LENGTH {
        0
    } else {
        1 + (samples - WIN_LENGTH) / HOP_LENGTH
    }
}

/// Sample count whose STFT has exactly `frames` frames.
pub fn samples_for_frames(frames: usize) -> usize {
    WIN_LENGTH + frames.saturating_sub(1) * HOP_LENGTH
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
        .collect()
}

/// Complex STFT values, shape `channels x bins x frames`.
#[derive(Debug, Clone)]
pub struct SpectrogramTensor {
    values: Array3<Complex64>,
    geometry: ArrayGeometry,
}

impl SpectrogramTensor {
    pub fn new(values: Array3<Complex64>, geometry: ArrayGeometry) -> Result<Self> {
        if values.shape()[0] != geometry.active_count() {
            return Err(Error::DimMismatch {
                expected: geometry.active_count(),
                got: values.shape()[0],
            });
        }
        Ok(Self { values, geometry })
    }

    pub fn values(&self) -> &Array3<Complex64> {
        &self.values
    }

    pub fn channel(&self, ch: usize) -> ArrayView2<'_, Complex64> {
        self.values.index_axis(ndarray::Axis(0), ch)
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn bin_hz(&self) -> f64 {
        BIN_HZ
    }

    pub fn frame_hop(&self) -> f64 {
        HOP_LENGTH as f64 / SAMPLE_RATE as f64
    }

    pub fn window_len(&self) -> f64 {
        WIN_LENGTH as f64 / SAMPLE_RATE as f64
    }

    /// Centre frequency of every bin in Hz.
    pub fn bin_frequencies(&self) -> Vec<f64> {
        (0..self.bins()).map(|k| k as f64 * BIN_HZ).collect()
    }
}

/// Reusable STFT analyser; holds the FFT plan and window.
pub struct Stft {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

impl Stft {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(N_FFT);
        Self {
            fft,
            window: hann_window(WIN_LENGTH),
        }
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn process(&self, waveform: &MultichannelWaveform) -> Result<SpectrogramTensor> {
        if waveform.sample_rate() != SAMPLE_RATE {
            return Err(Error::SampleRate(waveform.sample_rate()));
        }
        let n = waveform.len();
        if n < WIN_LENGTH {
            return Err(Error::SignalTooShort {
                got: n,
                need: WIN_LENGTH,
            });
        }
        let frames = frame_count(n);
        let channels = waveform.channels();
        let mut values = Array3::<Complex64>::zeros((channels, N_BINS, frames));
        let mut buf = vec![Complex64::new(0.0, 0.0); N_FFT];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for ch in 0..channels {
            let x = waveform.channel(ch);
            for t in 0..frames {
                let start = t * HOP_LENGTH;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = if i < WIN_LENGTH {
                        Complex64::new(x[start + i] as f64 * self.window[i], 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                for k in 0..N_BINS {
                    values[[ch, k, t]] = buf[k];
                }
            }
        }
        SpectrogramTensor::new(values, waveform.geometry().clone())
    }
}

/// One-shot STFT of every channel.
pub fn stft(waveform: &MultichannelWaveform) -> Result<SpectrogramTensor> {
    Stft::new().process(waveform)
}
