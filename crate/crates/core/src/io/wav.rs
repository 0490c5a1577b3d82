use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use ndarray::Array2;

use crate::array_sim::{ArrayGeometry, MultichannelWaveform, DEFAULT_RADIUS, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Sample encoding used when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

/// Reads a 16 kHz multichannel WAV (PCM 16-bit or 32-bit float). Without a
/// geometry the channels are taken as a uniform circular array of the
/// default radius.
pub fn read_wav(path: &Path, geometry: Option<ArrayGeometry>) -> Result<MultichannelWaveform> {
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRate(spec.sample_rate));
    }
    let channels = spec.channels as usize;
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (format, bits) => {
            return Err(Error::Format(format!(
                "{}: unsupported WAV encoding {format:?} {bits}-bit",
                path.display()
            )))
        }
    };
    let frames = interleaved.len() / channels;
    let samples = Array2::from_shape_vec((frames, channels), interleaved)
        .map_err(|e| Error::Format(e.to_string()))?
        .reversed_axes()
        .as_standard_layout()
        .into_owned();
    let geometry = match geometry {
        Some(g) => {
            if g.active_count() != channels {
                return Err(Error::DimMismatch {
                    expected: g.active_count(),
                    got: channels,
                });
            }
            g
        }
        None => ArrayGeometry::uniform(channels, DEFAULT_RADIUS)?,
    };
    MultichannelWaveform::new(samples, SAMPLE_RATE, geometry)
}

pub fn write_wav(path: &Path, wave: &MultichannelWaveform, encoding: WavEncoding) -> Result<()> {
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: wave.channels() as u16,
        sample_rate: wave.sample_rate(),
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for i in 0..wave.len() {
        for ch in 0..wave.channels() {
            let v = wave.samples()[[ch, i]];
            match encoding {
                WavEncoding::Float32 => writer.write_sample(v)?,
                WavEncoding::Pcm16 => writer.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?,
            }
        }
    }
    writer.finalize()?;
    Ok(())
}
