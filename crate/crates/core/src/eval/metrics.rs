use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::SpeakerActivity;

/// Frame-level detection scores. FA and Miss are percentages of the
/// reference-positive frames; precision, recall and F1 are fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub false_alarm: f64,
    pub miss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when the reference has no positive frame; FA is then a
    /// percentage of all frames.
    pub no_reference_positives: bool,
}

pub fn detection_metrics(pred: &[bool], reference: &[bool]) -> Result<DetectionMetrics> {
    if pred.len() != reference.len() {
        return Err(Error::DimMismatch {
            expected: reference.len(),
            got: pred.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &r) in pred.iter().zip(reference) {
        match (p, r) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let positives = tp + fn_;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, positives);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let no_reference_positives = positives == 0;
    let (false_alarm, miss) = if no_reference_positives {
        (100.0 * ratio(fp, pred.len()), 0.0)
    } else {
        (100.0 * ratio(fp, positives), 100.0 * ratio(fn_, positives))
    };
    Ok(DetectionMetrics {
        false_alarm,
        miss,
        precision,
        recall,
        f1,
        no_reference_positives,
    })
}

/// Area under the precision/recall staircase: items sorted by descending
/// score (ties by index), summing precision at each positive.
pub fn average_precision(scores: &[f32], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::InvalidArgument(
            "average precision needs at least one positive label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(ap / positives as f64)
}

/// Local maxima at or above `threshold`, accepted greedily from the highest
/// and suppressing candidates closer than `min_distance` frames to an
/// accepted peak. Plateaus are represented by their first frame.
pub fn peak_pick(curve: &[f32], threshold: f32, min_distance: usize) -> Vec<usize> {
    let n = curve.len();
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&t| {
            let v = curve[t];
            let left = t == 0 || v > curve[t - 1];
            let right = t + 1 == n || v >= curve[t + 1];
            v >= threshold && left && right
        })
        .collect();
    candidates.sort_by(|&a, &b| curve[b].total_cmp(&curve[a]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| a.abs_diff(c) >= min_distance) {
            accepted.push(c);
        }
    }
    accepted.sort_unstable();
    accepted
}

/// Segmentation purity, coverage and their harmonic mean, as percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScores {
    pub purity: f64,
    pub coverage: f64,
    pub ser: f64,
}

/// `[start, end)` frame intervals delimited by the given boundaries.
pub fn segments_from_points(points: &[usize], frames: usize) -> Vec<(usize, usize)> {
    let mut cuts: Vec<usize> = points.iter().copied().filter(|&p| p > 0 && p < frames).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(0);
    bounds.extend(cuts);
    bounds.push(frames);
    bounds.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Reference regions: maximal runs of frames with the same active-speaker
/// set, silence included.
pub fn reference_regions(reference: &SpeakerActivity) -> Vec<(usize, usize)> {
    segments_from_points(&reference.change_points(), reference.frames())
}

/// Purity and coverage of a hypothesis segmentation, given as change-point
/// frames, against reference regions at frame resolution.
pub fn purity_coverage(hypothesis: &[usize], reference: &SpeakerActivity) -> Result<SegmentationScores> {
    let frames = reference.frames();
    if frames == 0 {
        return Err(Error::InvalidArgument("empty reference".into()));
    }
    let hyp = segments_from_points(hypothesis, frames);
    let refs = reference_regions(reference);
    let overlap = |a: (usize, usize), b: (usize, usize)| a.1.min(b.1).saturating_sub(a.0.max(b.0));
    // Both lists are sorted and tile [0, frames), so a merge walk visits
    // every overlapping pair once.
    let mut best_for_hyp = vec![0usize; hyp.len()];
    let mut best_for_ref = vec![0usize; refs.len()];
    let (mut i, mut j) = (0, 0);
    while i < hyp.len() && j < refs.len() {
        let o = overlap(hyp[i], refs[j]);
        best_for_hyp[i] = best_for_hyp[i].max(o);
        best_for_ref[j] = best_for_ref[j].max(o);
        if hyp[i].1 <= refs[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    let purity = 100.0 * best_for_hyp.iter().sum::<usize>() as f64 / frames as f64;
    let coverage = 100.0 * best_for_ref.iter().sum::<usize>() as f64 / frames as f64;
    let ser = if purity + coverage > 0.0 {
        2.0 * purity * coverage / (purity + coverage)
    } else {
        0.0
    };
    Ok(SegmentationScores { purity, coverage, ser })
}

/// Half-width of the normal-approximation 95% interval of the mean.
pub fn confidence_interval(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        log::warn!("confidence interval needs at least two files, got {n}");
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    1.96 * var.sqrt() / (n as f64).sqrt()
}
