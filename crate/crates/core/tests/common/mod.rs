//! Independent brute-force oracles shared by integration tests.
#![allow(dead_code)]

pub mod grad;

use chseg::labeling::{AnnotationSet, Segment, SpeakerActivity};
use rand::Rng;

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Average precision by enumerating every top-k operating point, with the
/// sum kept as an exact fraction until the final division.
pub fn brute_force_ap(scores: &[f32], labels: &[bool]) -> f64 {
    let n = scores.len();
    let positives = labels.iter().filter(|&&l| l).count() as u128;
    // rank[i] = number of items ordered before i.
    let rank: Vec<usize> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count()
        })
        .collect();
    let tp_at = |k: usize| (0..n).filter(|&i| rank[i] < k && labels[i]).count() as u128;
    let (mut num, mut den) = (0u128, 1u128);
    for k in 1..=n {
        let (tp, prev) = (tp_at(k), tp_at(k - 1));
        // (R_k - R_{k-1}) * P_k = (tp - prev) / positives * tp / k
        let (a, b) = ((tp - prev) * tp, positives * k as u128);
        if a == 0 {
            continue;
        }
        num = num * b + a * den;
        den *= b;
        let g = gcd(num, den);
        num /= g;
        den /= g;
    }
    num as f64 / den as f64
}

/// Purity and coverage (percent) from per-frame region labels.
pub fn brute_force_purity_coverage(hyp_points: &[usize], reference: &SpeakerActivity) -> (f64, f64) {
    let t_len = reference.frames();
    let mut ref_label = vec![0usize; t_len];
    for t in 1..t_len {
        ref_label[t] = ref_label[t - 1] + usize::from(reference.active_set(t) != reference.active_set(t - 1));
    }
    let hyp_label: Vec<usize> = (0..t_len)
        .map(|t| {
            let mut cuts: Vec<usize> = hyp_points
                .iter()
                .copied()
                .filter(|&p| p > 0 && p < t_len && p <= t)
                .collect();
            cuts.sort_unstable();
            cuts.dedup();
            cuts.len()
        })
        .collect();
    let nh = hyp_label.iter().max().map_or(0, |m| m + 1);
    let nr = ref_label.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; nr]; nh];
    for t in 0..t_len {
        counts[hyp_label[t]][ref_label[t]] += 1;
    }
    let purity: usize = counts.iter().map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    let coverage: usize = (0..nr)
        .map(|r| counts.iter().map(|row| row[r]).max().unwrap_or(0))
        .sum();
    (
        100.0 * purity as f64 / t_len as f64,
        100.0 * coverage as f64 / t_len as f64,
    )
}

/// Random annotation of at most `max_frames` frames with at most
/// `max_segments` segments on frame boundaries, speakers from {A, B, C}.
pub fn random_activity<R: Rng>(rng: &mut R, max_frames: usize, max_segments: usize) -> SpeakerActivity {
    let frames = rng.random_range(1..=max_frames);
    let n = rng.random_range(1..=max_segments);
    let segs = (0..n)
        .map(|_| {
            let a = rng.random_range(0..frames);
            let b = rng.random_range(a + 1..=frames);
            let spk = ["A", "B", "C"][rng.random_range(0..3)];
            Segment::new(spk, a as f64 / 100.0, b as f64 / 100.0)
        })
        .collect();
    let ann = AnnotationSet::new("rand", frames as f64 / 100.0, segs).unwrap();
    SpeakerActivity::from_annotations(&ann, frames)
}

/// Random scores (with deliberate ties) and labels with at least one positive.
pub fn random_ranking<R: Rng>(rng: &mut R, max_len: usize) -> (Vec<f32>, Vec<bool>) {
    let n = rng.random_range(1..=max_len);
    let scores: Vec<f32> = (0..n).map(|_| rng.random_range(0..8) as f32 / 8.0).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    let forced = rng.random_range(0..n);
    labels[forced] = true;
    (scores, labels)
}

/// Random hypothesis change points inside a recording.
pub fn random_points<R: Rng>(rng: &mut R, frames: usize) -> Vec<usize> {
    let k = rng.random_range(0..=frames.min(6));
    (0..k).map(|_| rng.random_range(0..=frames)).collect()
}
