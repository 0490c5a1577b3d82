//! RTTM speaker segments:
//! `SPEAKER <rec> 1 <tbeg> <tdur> <NA> <NA> <spk> <NA> <NA>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labeling::{AnnotationSet, Segment};

/// Segments grouped by recording id, in file order.
pub type RttmSegments = BTreeMap<String, Vec<Segment>>;

/// Parses RTTM text. Blank lines and lines starting with `#` or `;` are
/// skipped, as are non-`SPEAKER` records and zero-length turns.
pub fn parse_rttm(text: &str, path: &Path) -> Result<RttmSegments> {
    let mut out = RttmSegments::new();
    for (idx, line) in text.lines().enumerate() {
        let err = |reason: String| Error::Rttm {
            path: path.to_path_buf(),
            line: idx + 1,
            reason,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields[0] != "SPEAKER" {
            continue;
        }
        if fields.len() < 8 {
            return Err(err(format!("expected at least 8 fields, found {}", fields.len())));
        }
        let number = |i: usize, what: &str| -> Result<f64> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| err(format!("{what} '{}' is not a number", fields[i])))?;
            if !v.is_finite() || v < 0.0 {
                return Err(err(format!("{what} {v} must be finite and non-negative")));
            }
            Ok(v)
        };
        let start = number(3, "onset")?;
        let dur = number(4, "duration")?;
        if dur == 0.0 {
            continue;
        }
        out.entry(fields[1].to_string())
            .or_default()
            .push(Segment::new(fields[7], start, start + dur));
    }
    Ok(out)
}

pub fn read_rttm(path: &Path) -> Result<RttmSegments> {
    parse_rttm(&std::fs::read_to_string(path)?, path)
}

/// Serializes with millisecond times.
pub fn format_rttm(recording_id: &str, segments: &[Segment]) -> String {
    let mut out = String::new();
    for s in segments {
        let _ = writeln!(
            out,
            "SPEAKER {recording_id} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
            s.start,
            s.end - s.start,
            s.speaker
        );
    }
    out
}

pub fn write_rttm(path: &Path, annotations: &AnnotationSet) -> Result<()> {
    std::fs::write(path, format_rttm(annotations.recording_id(), annotations.segments()))?;
    Ok(())
}

/// Builds an annotation of `duration` seconds, clipping turns that run past
/// the end (a few milliseconds of rounding are common) and dropping turns
/// that start after it.
pub fn annotation_from_segments(recording_id: &str, duration: f64, segments: &[Segment]) -> Result<AnnotationSet> {
    let mut kept = Vec::with_capacity(segments.len());
    for s in segments {
        if s.start >= duration {
            log::warn!(
                "{recording_id}: turn of {} at {:.3}s starts after the audio ends",
                s.speaker,
                s.start
            );
            continue;
        }
        kept.push(Segment::new(&s.speaker, s.start, s.end.min(duration)));
    }
    AnnotationSet::new(recording_id, duration, kept)
}
