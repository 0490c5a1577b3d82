//! Frame-synchronous feature matrices and the recipes that build them.

pub mod acoustic;
pub mod bessel;
pub mod spatial;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::array_sim::MultichannelWaveform;
use crate::dsp::{SpectrogramTensor, Stft};
use crate::error::{Error, Result};
use spatial::{BrokenPairPolicy, ModalParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    LogMel,
    Mfcc,
    Ipd,
    Csipd,
    ChDoa,
    Concat,
}

impl FeatureKind {
    /// Row count for a fixed-size kind; `None` for concatenations.
    pub fn dim(self) -> Option<usize> {
        match self {
            FeatureKind::LogMel => Some(acoustic::LOG_MEL_BANDS),
            FeatureKind::Mfcc => Some(acoustic::MFCC_DIM),
            FeatureKind::Ipd => Some(4 * crate::dsp::N_BINS),
            FeatureKind::Csipd => Some(8 * crate::dsp::N_BINS),
            FeatureKind::ChDoa => Some(crate::dsp::N_BINS),
            FeatureKind::Concat => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::LogMel => "log_mel",
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Ipd => "ipd",
            FeatureKind::Csipd => "csipd",
            FeatureKind::ChDoa => "ch_doa",
            FeatureKind::Concat => "concat",
        }
    }

    pub fn is_acoustic(self) -> bool {
        matches!(self, FeatureKind::LogMel | FeatureKind::Mfcc)
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "log_mel" | "logmel" | "fbank" => FeatureKind::LogMel,
            "mfcc" => FeatureKind::Mfcc,
            "ipd" => FeatureKind::Ipd,
            "csipd" => FeatureKind::Csipd,
            "ch_doa" | "chdoa" => FeatureKind::ChDoa,
            other => return Err(Error::InvalidArgument(format!("unknown feature '{other}'"))),
        })
    }
}

/// Real feature matrix, `F x T`, at 100 frames per second.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    values: Array2<f32>,
    kind: FeatureKind,
}

impl FeatureSequence {
    pub fn new(values: Array2<f32>, kind: FeatureKind) -> Result<Self> {
        if let Some(dim) = kind.dim() {
            // IPD/CSIPD scale with the number of pairs.
            let ok = match kind {
                FeatureKind::Ipd => values.nrows().is_multiple_of(crate::dsp::N_BINS),
                FeatureKind::Csipd => values.nrows().is_multiple_of(2 * crate::dsp::N_BINS),
                _ => values.nrows() == dim,
            };
            if !ok {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: values.nrows(),
                });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value in {} features",
                kind.name()
            )));
        }
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f32> {
        self.values
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn frame_rate(&self) -> f64 {
        crate::labeling::FRAME_RATE
    }
}

/// Stacks sequences along the feature axis; all must share `T`.
pub fn concat(parts: &[FeatureSequence]) -> Result<FeatureSequence> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
    if parts.len() == 1 {
        return Ok(first.clone());
    }
    for p in parts {
        if p.frames() != first.frames() {
            return Err(Error::DimMismatch {
                expected: first.frames(),
                got: p.frames(),
            });
        }
    }
    let views: Vec<_> = parts.iter().map(|p| p.values.view()).collect();
    let values = ndarray::concatenate(Axis(0), &views).expect("frame counts checked");
    Ok(FeatureSequence {
        values,
        kind: FeatureKind::Concat,
    })
}

/// An acoustic feature (optional) followed by zero or more spatial features,
/// written as e.g. `mfcc+ch_doa`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureRecipe {
    parts: Vec<FeatureKind>,
}

impl FeatureRecipe {
    pub fn new(parts: Vec<FeatureKind>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("empty feature recipe".into()));
        }
        if parts.iter().filter(|k| k.is_acoustic()).count() > 1 {
            return Err(Error::InvalidArgument("at most one acoustic feature".into()));
        }
        if parts.iter().skip(1).any(|k| k.is_acoustic()) {
            return Err(Error::InvalidArgument("acoustic feature must come first".into()));
        }
        if parts.contains(&FeatureKind::Concat) {
            return Err(Error::InvalidArgument("'concat' is not a recipe part".into()));
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &[FeatureKind] {
        &self.parts
    }

    /// Total feature dimension with the default four microphone pairs.
    pub fn dim(&self) -> usize {
        self.parts.iter().map(|k| k.dim().expect("fixed size")).sum()
    }

    /// Row range of the acoustic block, the only rows eligible for masking.
    pub fn acoustic_rows(&self) -> std::ops::Range<usize> {
        match self.parts.first() {
            Some(k) if k.is_acoustic() => 0..k.dim().expect("fixed size"),
            _ => 0..0,
        }
    }

    pub fn needs_spatial(&self) -> bool {
        self.parts.iter().any(|k| !k.is_acoustic())
    }
}

impl FromStr for FeatureRecipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts = s.split('+').map(FeatureKind::from_str).collect::<Result<Vec<_>>>()?;
        Self::new(parts)
    }
}

impl TryFrom<String> for FeatureRecipe {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureRecipe> for String {
    fn from(r: FeatureRecipe) -> String {
        r.to_string()
    }
}

impl fmt::Display for FeatureRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.parts.iter().map(|k| k.name()).collect();
        f.write_str(&names.join("+"))
    }
}

/// Extraction settings shared by every recipe.
#[derive(Debug, Clone)]
pub struct ExtractOptions {
    /// IPD pairs as original microphone numbers (0-based).
    pub ipd_pairs: Vec<(usize, usize)>,
    pub broken_pairs: BrokenPairPolicy,
    pub modal: ModalParams,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            ipd_pairs: spatial::opposed_pairs(8),
            broken_pairs: BrokenPairPolicy::Error,
            modal: ModalParams::default(),
        }
    }
}

/// Computes every part of `recipe` from one shared STFT.
pub struct FeatureExtractor {
    recipe: FeatureRecipe,
    options: ExtractOptions,
    stft: Stft,
}

impl FeatureExtractor {
    pub fn new(recipe: FeatureRecipe, options: ExtractOptions) -> Self {
        Self {
            recipe,
            options,
            stft: Stft::new(),
        }
    }

    pub fn recipe(&self) -> &FeatureRecipe {
        &self.recipe
    }

    pub fn extract(&self, waveform: &MultichannelWaveform) -> Result<FeatureSequence> {
        let spectra = self.stft.process(waveform)?;
        self.from_spectra(&spectra)
    }

    pub fn from_spectra(&self, spectra: &SpectrogramTensor) -> Result<FeatureSequence> {
        let mut parts = Vec::with_capacity(self.recipe.parts.len());
        let mut ipd_cache: Option<FeatureSequence> = None;
        let mut ipd = |spectra: &SpectrogramTensor| -> Result<FeatureSequence> {
            if let Some(f) = &ipd_cache {
                return Ok(f.clone());
            }
            let f = spatial::ipd_with_policy(spectra, &self.options.ipd_pairs, self.options.broken_pairs)?;
            ipd_cache = Some(f.clone());
            Ok(f)
        };
        for kind in &self.recipe.parts {
            // Acoustic features use channel 0: the lowest-numbered live mic.
            let part = match kind {
                FeatureKind::LogMel => acoustic::log_mel(spectra, 0)?,
                FeatureKind::Mfcc => acoustic::mfcc(spectra, 0)?,
                FeatureKind::Ipd => ipd(spectra)?,
                FeatureKind::Csipd => spatial::csipd(&ipd(spectra)?)?,
                FeatureKind::ChDoa => spatial::ch_doa_with(spectra, &self.options.modal)?,
                FeatureKind::Concat => unreachable!("rejected by FeatureRecipe::new"),
            };
            parts.push(part);
        }
        concat(&parts)
    }
}

/// Per-row mean and standard deviation, fitted on training features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

const STD_FLOOR: f64 = 1e-5;

impl FeatureStats {
    pub fn fit<'a>(sequences: impl IntoIterator<Item = &'a Array2<f32>>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for seq in sequences {
            if sum.is_empty() {
                sum = vec![0.0; seq.nrows()];
                sq = vec![0.0; seq.nrows()];
            } else if seq.nrows() != sum.len() {
                return Err(Error::DimMismatch {
                    expected: sum.len(),
                    got: seq.nrows(),
                });
            }
            for (row, (s, q)) in seq.rows().into_iter().zip(sum.iter_mut().zip(sq.iter_mut())) {
                for &v in row {
                    *s += v as f64;
                    *q += (v as f64) * (v as f64);
                }
            }
            count += seq.ncols();
        }
        if count == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = count as f64;
        let mean: Vec<f32> = sum.iter().map(|s| (s / n) as f32).collect();
        let std = sum
            .iter()
            .zip(&sq)
            .map(|(s, q)| {
                let m = s / n;
                ((q / n - m * m).max(0.0).sqrt().max(STD_FLOOR)) as f32
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, values: &mut Array2<f32>) -> Result<()> {
        if values.nrows() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: values.nrows(),
            });
        }
        for (mut row, (m, s)) in values.rows_mut().into_iter().zip(self.mean.iter().zip(&self.std)) {
            row.mapv_inplace(|v| (v - m) / s);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_sim::{gen_scenario, ArraySpec, ScenarioSpec, SignalKind, SourceSpec};

    fn scene() -> MultichannelWaveform {
        let spec = ScenarioSpec {
            recording_id: "x".into(),
            duration: 2.0,
            seed: 1,
            noise_snr: Some(20.0),
            sources: vec![SourceSpec {
                id: "a".into(),
                azimuth: 1.0,
                signal: SignalKind::SpeechLike,
                intervals: vec![[0.2, 1.8]],
                level_db: 0.0,
            }],
            array: ArraySpec::default(),
        };
        gen_scenario(&spec).unwrap().0
    }

    #[test]
    fn recipe_parsing() {
        let r: FeatureRecipe = "mfcc+ch_doa".parse().unwrap();
        assert_eq!(r.dim(), 316);
        assert_eq!(r.to_string(), "mfcc+ch_doa");
        assert_eq!(r.acoustic_rows(), 0..59);
        assert_eq!("log_mel+csipd".parse::<FeatureRecipe>().unwrap().dim(), 80 + 2056);
        assert!("ch_doa+mfcc".parse::<FeatureRecipe>().is_err());
        assert!("mfcc+log_mel".parse::<FeatureRecipe>().is_err());
        assert!("mfcc+bogus".parse::<FeatureRecipe>().is_err());
        assert_eq!("ch_doa".parse::<FeatureRecipe>().unwrap().acoustic_rows(), 0..0);
    }

    #[test]
    fn all_dimensions() {
        let w = scene();
        for (recipe, dim) in [
            ("log_mel", 80),
            ("mfcc", 59),
            ("ipd", 1028),
            ("csipd", 2056),
            ("ch_doa", 257),
            ("mfcc+ipd+ch_doa", 59 + 1028 + 257),
        ] {
            let ex = FeatureExtractor::new(recipe.parse().unwrap(), ExtractOptions::default());
            let f = ex.extract(&w).unwrap();
            assert_eq!(f.dim(), dim, "{recipe}");
            assert_eq!(f.frames(), 198);
        }
    }

    #[test]
    fn acoustic_features_ignore_other_channels() {
        let w = scene();
        let mut perm = w.samples().clone();
        // Reverse channels 1..8, keep channel 0.
        for ch in 1..8 {
            perm.row_mut(ch).assign(&w.samples().row(8 - ch));
        }
        let w2 = MultichannelWaveform::new(perm, 16000, w.geometry().clone()).unwrap();
        for recipe in ["mfcc", "log_mel"] {
            let ex = FeatureExtractor::new(recipe.parse().unwrap(), ExtractOptions::default());
            assert_eq!(ex.extract(&w).unwrap(), ex.extract(&w2).unwrap());
        }
    }

    #[test]
    fn concat_preserves_frames() {
        let a = FeatureSequence::new(Array2::zeros((59, 10)), FeatureKind::Mfcc).unwrap();
        let b = FeatureSequence::new(Array2::ones((257, 10)), FeatureKind::ChDoa).unwrap();
        let c = concat(&[a.clone(), b]).unwrap();
        assert_eq!((c.dim(), c.frames()), (316, 10));
        let short = FeatureSequence::new(Array2::zeros((257, 9)), FeatureKind::ChDoa).unwrap();
        assert!(concat(&[a, short]).is_err());
    }

    #[test]
    fn feature_sequence_validation() {
        assert!(FeatureSequence::new(Array2::zeros((58, 3)), FeatureKind::Mfcc).is_err());
        let mut v = Array2::zeros((80, 3));
        v[[0, 0]] = f32::NAN;
        assert!(FeatureSequence::new(v, FeatureKind::LogMel).is_err());
    }

    #[test]
    fn stats_normalize_to_zero_mean_unit_variance() {
        let a = Array2::from_shape_fn((3, 50), |(r, t)| (r as f32 + 1.0) * t as f32);
        let b = Array2::from_shape_fn((3, 30), |(r, t)| r as f32 - t as f32);
        let stats = FeatureStats::fit([&a, &b]).unwrap();
        let mut all = ndarray::concatenate(Axis(1), &[a.view(), b.view()]).unwrap();
        stats.apply(&mut all).unwrap();
        for row in all.rows() {
            let n = row.len() as f64;
            let m: f64 = row.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var: f64 = row.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / n;
            assert!(m.abs() < 1e-4);
            assert!((var - 1.0).abs() < 1e-3);
        }
        let constant = Array2::from_elem((2, 10), 4.0f32);
        let s = FeatureStats::fit([&constant]).unwrap();
        let mut c = constant.clone();
        s.apply(&mut c).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
    }
}
