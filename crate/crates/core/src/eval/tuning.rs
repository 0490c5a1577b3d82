use crate::error::{Error, Result};
use crate::labeling::{targets_from_activity, SpeakerActivity, Task};

use super::metrics::{peak_pick, purity_coverage};

/// Default minimum distance between detected change points, in frames.
pub const DEFAULT_MIN_DISTANCE: usize = 20;

/// Frame scores of one recording with its reference activity.
#[derive(Debug, Clone, Copy)]
pub struct ScoredFile<'a> {
    pub scores: &'a [f32],
    pub reference: &'a SpeakerActivity,
}

impl ScoredFile<'_> {
    fn check(&self) -> Result<()> {
        if self.scores.len() != self.reference.frames() {
            return Err(Error::DimMismatch {
                expected: self.reference.frames(),
                got: self.scores.len(),
            });
        }
        Ok(())
    }

    /// Binary reference for VAD/OSD.
    pub fn binary_reference(&self, task: Task) -> Vec<bool> {
        targets_from_activity(self.reference, task, 1.0)
            .values
            .iter()
            .map(|&v| v >= 0.5)
            .collect()
    }
}

/// Decision parameters chosen on the development set.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tuned {
    pub threshold: f64,
    /// Peak-picking distance, used for SCD only.
    pub min_distance: usize,
}

/// Thresholds 0.01, 0.02, ..., 0.99.
pub fn threshold_grid() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Frames whose score reaches the threshold.
pub fn binarize(scores: &[f32], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= threshold as f32).collect()
}

const FALLBACK: f64 = 0.5;

/// Grid search for the detection threshold. VAD minimizes pooled FA+Miss,
/// OSD maximizes pooled F1 and SCD maximizes the mean file SER with the
/// default peak distance. Ties keep the lowest threshold.
pub fn tune_threshold(files: &[ScoredFile<'_>], task: Task) -> Result<f64> {
    Ok(tune(files, task, &[DEFAULT_MIN_DISTANCE])?.threshold)
}

/// As [`tune_threshold`], additionally choosing the SCD peak distance from
/// `distances` (the first of equally good candidates wins).
pub fn tune(files: &[ScoredFile<'_>], task: Task, distances: &[usize]) -> Result<Tuned> {
    if files.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if distances.is_empty() {
        return Err(Error::InvalidArgument("no peak distance candidates".into()));
    }
    for f in files {
        f.check()?;
    }
    let fallback = Tuned {
        threshold: FALLBACK,
        min_distance: distances[0],
    };
    if task == Task::Scd {
        if files.iter().all(|f| f.reference.change_points().is_empty()) {
            log::warn!("development references contain no change point; using threshold {FALLBACK}");
            return Ok(fallback);
        }
        let mut best: Option<(f64, Tuned)> = None;
        for &d in distances {
            for th in threshold_grid() {
                let mut total = 0.0;
                for f in files {
                    let points = peak_pick(f.scores, th as f32, d);
                    total += purity_coverage(&points, f.reference)?.ser;
                }
                let score = total / files.len() as f64;
                if best.is_none_or(|(s, _)| score > s) {
                    best = Some((
                        score,
                        Tuned {
                            threshold: th,
                            min_distance: d,
                        },
                    ));
                }
            }
        }
        return Ok(best.expect("non-empty grid").1);
    }

    let refs: Vec<Vec<bool>> = files.iter().map(|f| f.binary_reference(task)).collect();
    let positives: usize = refs.iter().flatten().filter(|&&r| r).count();
    let total: usize = refs.iter().map(Vec::len).sum();
    if positives == 0 || positives == total {
        log::warn!("development reference is all one class; using threshold {FALLBACK}");
        return Ok(fallback);
    }
    let mut best: Option<(f64, f64)> = None;
    for th in threshold_grid() {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (f, r) in files.iter().zip(&refs) {
            for (&s, &y) in f.scores.iter().zip(r) {
                let p = s >= th as f32;
                tp += usize::from(p && y);
                fp += usize::from(p && !y);
                fn_ += usize::from(!p && y);
            }
        }
        // Higher is better for both criteria.
        let score = match task {
            Task::Vad => -((fp + fn_) as f64),
            _ => {
                if tp == 0 {
                    0.0
                } else {
                    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
                }
            }
        };
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, th));
        }
    }
    Ok(Tuned {
        threshold: best.expect("non-empty grid").1,
        ..fallback
    })
}
