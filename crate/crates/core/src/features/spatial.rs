//! Circular-harmonic DOA features and inter-microphone phase baselines.
//!
//! The CH-DOA pipeline estimates first-order circular-harmonic coefficients
//! from the live microphones, forms an omni beam and two dipole beams by
//! dividing out the mode strength `j^n J_n(kr)`, takes the pseudo-intensity
//! vector `0.5 * Re{conj(B0) * (B1x, B1y)}` and reports its angle per
//! time-frequency bin.

use std::f64::consts::PI;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;

use super::bessel::{j0, j1};
use super::{FeatureKind, FeatureSequence};
use crate::array_sim::ArrayGeometry;
use crate::dsp::SpectrogramTensor;
use crate::error::{Error, Result};

/// Minimum live microphones for first-order circular harmonics.
pub const MIN_CH_MICS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModalParams {
    /// Mode-strength divisors smaller than this in magnitude are clamped to it.
    pub bessel_floor: f64,
    /// Bins with `kr` below this are degenerate and get DOA 0.
    pub min_kr: f64,
}

impl Default for ModalParams {
    fn default() -> Self {
        Self {
            bessel_floor: 1e-4,
            min_kr: 0.05,
        }
    }
}

/// Estimated coefficients for orders -1, 0, +1; shape `3 x bins x frames`.
#[derive(Debug, Clone)]
pub struct ChCoefficients {
    coeffs: Array3<Complex64>,
}

impl ChCoefficients {
    pub fn order(&self, n: i32) -> ArrayView2<'_, Complex64> {
        assert!((-1..=1).contains(&n), "order {n} not estimated");
        self.coeffs.index_axis(Axis(0), (n + 1) as usize)
    }

    pub fn bins(&self) -> usize {
        self.coeffs.shape()[1]
    }

    pub fn frames(&self) -> usize {
        self.coeffs.shape()[2]
    }
}

/// `C_n(f,t) = 1/M' * sum_m X_m(f,t) exp(-j n psi_m)` over the live microphones.
pub fn ch_coefficients(spectra: &SpectrogramTensor) -> Result<ChCoefficients> {
    let angles = spectra.geometry().active_angles();
    let m = angles.len();
    if m < MIN_CH_MICS {
        return Err(Error::TooFewMicrophones {
            got: m,
            need: MIN_CH_MICS,
        });
    }
    let (bins, frames) = (spectra.bins(), spectra.frames());
    let mut coeffs = Array3::<Complex64>::zeros((3, bins, frames));
    for n in -1i32..=1 {
        let mut out = coeffs.index_axis_mut(Axis(0), (n + 1) as usize);
        for (ch, &psi) in angles.iter().enumerate() {
            let steer = Complex64::from_polar(1.0 / m as f64, -(n as f64) * psi);
            out.zip_mut_with(&spectra.channel(ch), |acc, &x| *acc += x * steer);
        }
    }
    Ok(ChCoefficients { coeffs })
}

/// Zero-order and dipole beams.
#[derive(Debug, Clone)]
pub struct ModalBeams {
    pub b0: Array2<Complex64>,
    pub b1x: Array2<Complex64>,
    pub b1y: Array2<Complex64>,
    /// Per-bin flag for `kr` below [`ModalParams::min_kr`].
    pub degenerate: Vec<bool>,
}

fn clamp_signed(v: f64, floor: f64) -> f64 {
    if v.abs() >= floor {
        v
    } else if v.is_sign_negative() {
        -floor
    } else {
        floor
    }
}

/// Steering angles of the two dipole beams.
pub const THETA_X: f64 = 0.0;
pub const THETA_Y: f64 = PI / 2.0;

/// Omni beam `C_0 / J_0(kr)` and dipole beams
/// `sum_{n = +-1} C_n / (j^n J_n(kr)) * exp(j n theta)`.
pub fn modal_beams(
    coeffs: &ChCoefficients,
    geometry: &ArrayGeometry,
    bin_frequencies: &[f64],
    params: &ModalParams,
) -> Result<ModalBeams> {
    if bin_frequencies.len() != coeffs.bins() {
        return Err(Error::DimMismatch {
            expected: coeffs.bins(),
            got: bin_frequencies.len(),
        });
    }
    let shape = (coeffs.bins(), coeffs.frames());
    let mut b0 = Array2::zeros(shape);
    let mut b1x = Array2::zeros(shape);
    let mut b1y = Array2::zeros(shape);
    let mut degenerate = Vec::with_capacity(coeffs.bins());
    let (c_neg, c_zero, c_pos) = (coeffs.order(-1), coeffs.order(0), coeffs.order(1));
    let j = Complex64::i();
    for (bin, &freq) in bin_frequencies.iter().enumerate() {
        let kr = geometry.kr(freq);
        degenerate.push(kr < params.min_kr);
        let d0 = clamp_signed(j0(kr), params.bessel_floor);
        let d1 = clamp_signed(j1(kr), params.bessel_floor);
        // j^{+1} J_1 and j^{-1} J_{-1} = (-j)(-J_1) are both j J_1.
        let div_pos = j * d1;
        let div_neg = (-j) * (-d1);
        let w_pos_x = Complex64::from_polar(1.0, THETA_X) / div_pos;
        let w_neg_x = Complex64::from_polar(1.0, -THETA_X) / div_neg;
        let w_pos_y = Complex64::from_polar(1.0, THETA_Y) / div_pos;
        let w_neg_y = Complex64::from_polar(1.0, -THETA_Y) / div_neg;
        for t in 0..shape.1 {
            let (cp, cn) = (c_pos[[bin, t]], c_neg[[bin, t]]);
            b0[[bin, t]] = c_zero[[bin, t]] / d0;
            b1x[[bin, t]] = cp * w_pos_x + cn * w_neg_x;
            b1y[[bin, t]] = cp * w_pos_y + cn * w_neg_y;
        }
    }
    Ok(ModalBeams {
        b0,
        b1x,
        b1y,
        degenerate,
    })
}

/// Pseudo-intensity vector components.
#[derive(Debug, Clone)]
pub struct PivField {
    pub ix: Array2<f64>,
    pub iy: Array2<f64>,
}

pub fn piv(beams: &ModalBeams) -> PivField {
    let half_re = |b: &Array2<Complex64>| {
        ndarray::Zip::from(&beams.b0)
            .and(b)
            .map_collect(|b0, b1| 0.5 * (b0.conj() * b1).re)
    };
    PivField {
        ix: half_re(&beams.b1x),
        iy: half_re(&beams.b1y),
    }
}

/// Four-quadrant angle in `(-pi, pi]`, 0 for a zero vector.
fn doa_angle(iy: f64, ix: f64) -> f64 {
    if ix == 0.0 && iy == 0.0 {
        return 0.0;
    }
    let a = iy.atan2(ix);
    if a <= -PI {
        PI
    } else {
        a
    }
}

/// Per-bin DOA (radians) for every frame, `bins x frames`.
pub fn ch_doa_angles(spectra: &SpectrogramTensor, params: &ModalParams) -> Result<Array2<f64>> {
    let coeffs = ch_coefficients(spectra)?;
    let beams = modal_beams(&coeffs, spectra.geometry(), &spectra.bin_frequencies(), params)?;
    let field = piv(&beams);
    let mut out = Array2::zeros(field.ix.raw_dim());
    for ((bin, t), v) in out.indexed_iter_mut() {
        *v = if beams.degenerate[bin] {
            0.0
        } else {
            doa_angle(field.iy[[bin, t]], field.ix[[bin, t]])
        };
    }
    Ok(out)
}

/// CH-DOA feature: one angle per STFT bin, 257 rows.
pub fn ch_doa(spectra: &SpectrogramTensor) -> Result<FeatureSequence> {
    ch_doa_with(spectra, &ModalParams::default())
}

pub fn ch_doa_with(spectra: &SpectrogramTensor, params: &ModalParams) -> Result<FeatureSequence> {
    let angles = ch_doa_angles(spectra, params)?;
    FeatureSequence::new(angles.mapv(|v| v as f32), FeatureKind::ChDoa)
}

/// Diametrically opposed pairs `(m, m + M/2)` of a pristine `M`-mic array.
pub fn opposed_pairs(mic_count: usize) -> Vec<(usize, usize)> {
    (0..mic_count / 2).map(|m| (m, m + mic_count / 2)).collect()
}

/// What to do when a requested pair includes a deactivated microphone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrokenPairPolicy {
    Error,
    /// Emit zero phase for the broken pair, as if the dead microphone
    /// carried a silent signal.
    ZeroFill,
}

fn wrap_phase(a: f64) -> f64 {
    if a <= -PI {
        PI
    } else {
        a
    }
}

/// Phase of `X_i * conj(X_j)` for each pair; pairs use original microphone
/// numbers (0-based). Rows are pair-major: `pair * bins + bin`.
pub fn ipd(spectra: &SpectrogramTensor, pairs: &[(usize, usize)]) -> Result<FeatureSequence> {
    ipd_with_policy(spectra, pairs, BrokenPairPolicy::Error)
}

pub fn ipd_with_policy(
    spectra: &SpectrogramTensor,
    pairs: &[(usize, usize)],
    policy: BrokenPairPolicy,
) -> Result<FeatureSequence> {
    let geometry = spectra.geometry();
    let (bins, frames) = (spectra.bins(), spectra.frames());
    let mut values = Array2::<f32>::zeros((pairs.len() * bins, frames));
    for (p, &(mi, mj)) in pairs.iter().enumerate() {
        let (ci, cj) = match (geometry.channel_of(mi), geometry.channel_of(mj)) {
            (Some(ci), Some(cj)) => (ci, cj),
            _ => match policy {
                BrokenPairPolicy::Error => return Err(Error::InactivePair(mi, mj)),
                BrokenPairPolicy::ZeroFill => {
                    log::warn!("pair ({mi}, {mj}) has a deactivated microphone; IPD set to 0");
                    continue;
                }
            },
        };
        let (xi, xj) = (spectra.channel(ci), spectra.channel(cj));
        for bin in 0..bins {
            for t in 0..frames {
                let cross = xi[[bin, t]] * xj[[bin, t]].conj();
                values[[p * bins + bin, t]] = wrap_phase(cross.im.atan2(cross.re)) as f32;
            }
        }
    }
    FeatureSequence::new(values, FeatureKind::Ipd)
}

/// `[cos(IPD); sin(IPD)]`.
pub fn csipd(ipd_features: &FeatureSequence) -> Result<FeatureSequence> {
    if ipd_features.kind() != FeatureKind::Ipd {
        return Err(Error::InvalidArgument(format!(
            "csipd expects IPD input, got {:?}",
            ipd_features.kind()
        )));
    }
    let v = ipd_features.values();
    let stacked =
        ndarray::concatenate(Axis(0), &[v.mapv(f32::cos).view(), v.mapv(f32::sin).view()]).expect("same frame count");
    FeatureSequence::new(stacked, FeatureKind::Csipd)
}
