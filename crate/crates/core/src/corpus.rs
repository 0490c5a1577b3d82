//! Directory corpora: `<rec>.wav` with a matching `<rec>.rttm`.

use std::path::{Path, PathBuf};

use crate::array_sim::{ArrayGeometry, MultichannelWaveform};
use crate::error::{Error, Result};
use crate::io::{annotation_from_segments, read_rttm, read_wav, write_rttm, write_wav, WavEncoding};
use crate::labeling::AnnotationSet;
use crate::nn::Recording;

/// WAV files of `dir` in name order.
pub fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads every recording of `dir`. Each WAV needs an RTTM file with the same
/// stem; its turns for that recording id (all turns if the id does not occur)
/// become the reference.
pub fn load_corpus(dir: &Path, geometry: Option<&ArrayGeometry>) -> Result<Vec<Recording>> {
    let files = wav_files(dir)?;
    if files.is_empty() {
        return Err(Error::Config(format!("no WAV files in {}", dir.display())));
    }
    files.iter().map(|wav| load_recording(wav, geometry)).collect()
}

pub fn load_recording(wav: &Path, geometry: Option<&ArrayGeometry>) -> Result<Recording> {
    let id = wav
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("bad file name {}", wav.display())))?
        .to_string();
    let rttm = wav.with_extension("rttm");
    if !rttm.exists() {
        return Err(Error::Config(format!("missing annotation {}", rttm.display())));
    }
    let wave = read_wav(wav, geometry.cloned())?;
    let mut by_rec = read_rttm(&rttm)?;
    let segments = match by_rec.remove(&id) {
        Some(s) => s,
        None => {
            if !by_rec.is_empty() {
                log::warn!("{}: no turns for '{id}', using all turns in the file", rttm.display());
            }
            by_rec.into_values().flatten().collect()
        }
    };
    let annotations = annotation_from_segments(&id, wave.duration(), &segments)?;
    Ok(Recording { wave, annotations })
}

/// Writes `<id>.wav` and `<id>.rttm` into `dir`.
pub fn write_recording(dir: &Path, wave: &MultichannelWaveform, annotations: &AnnotationSet) -> Result<()> {
    let id = annotations.recording_id();
    write_wav(&dir.join(format!("{id}.wav")), wave, WavEncoding::Float32)?;
    write_rttm(&dir.join(format!("{id}.rttm")), annotations)
}
