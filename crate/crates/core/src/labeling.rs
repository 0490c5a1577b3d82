//! Frame-level targets for voice activity, overlap and speaker-change detection.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array_sim::MultichannelWaveform;
use crate::error::{Error, Result};

/// Frames per second of every frame-synchronous sequence in the toolkit.
pub const FRAME_RATE: f64 = 100.0;

/// Range of the per-example Gaussian variance (in frames squared) of SCD targets.
pub const SCD_SIGMA2_RANGE: (f64, f64) = (2.0, 7.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Vad,
    Osd,
    Scd,
}

impl Task {
    pub fn is_classification(self) -> bool {
        !matches!(self, Task::Scd)
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Vad => "vad",
            Task::Osd => "osd",
            Task::Scd => "scd",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vad" => Ok(Task::Vad),
            "osd" => Ok(Task::Osd),
            "scd" => Ok(Task::Scd),
            other => Err(Error::InvalidArgument(format!("unknown task '{other}'"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub speaker: String,
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn new(speaker: &str, start: f64, end: f64) -> Self {
        Self {
            speaker: speaker.to_string(),
            start,
            end,
        }
    }
}

/// Reference diarization of one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    recording_id: String,
    duration: f64,
    segments: Vec<Segment>,
}

impl AnnotationSet {
    pub fn new(recording_id: &str, duration: f64, mut segments: Vec<Segment>) -> Result<Self> {
        for s in &segments {
            if !(0.0 <= s.start && s.start < s.end && s.end <= duration) {
                return Err(Error::InvalidArgument(format!(
                    "segment [{}, {}) of '{}' outside [0, {duration}]",
                    s.start, s.end, s.speaker
                )));
            }
        }
        segments.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
        Ok(Self {
            recording_id: recording_id.to_string(),
            duration,
            segments,
        })
    }

    pub fn empty(recording_id: &str, duration: f64) -> Self {
        Self {
            recording_id: recording_id.to_string(),
            duration,
            segments: Vec::new(),
        }
    }

    pub fn recording_id(&self) -> &str {
        &self.recording_id
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Frame count covering the recording duration.
    pub fn frames(&self) -> usize {
        (self.duration * FRAME_RATE - 1e-6).ceil().max(0.0) as usize
    }

    pub fn speakers(&self) -> Vec<String> {
        self.segments
            .iter()
            .map(|s| s.speaker.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// Per-speaker activity rasterized at frame centres `(t + 0.5) / 100` s.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerActivity {
    speakers: Vec<String>,
    active: Vec<Vec<bool>>,
    frames: usize,
}

impl SpeakerActivity {
    pub fn from_annotations(annotations: &AnnotationSet, frames: usize) -> Self {
        let speakers = annotations.speakers();
        let mut active = vec![vec![false; frames]; speakers.len()];
        for seg in annotations.segments() {
            let row = speakers.binary_search(&seg.speaker).expect("speaker listed");
            // Frame t is covered when start <= (t + 0.5) / 100 < end.
            let first = (seg.start * FRAME_RATE - 0.5).ceil().max(0.0) as usize;
            let last = (seg.end * FRAME_RATE - 0.5).ceil().max(0.0) as usize;
            for flag in active[row].iter_mut().take(last.min(frames)).skip(first.min(frames)) {
                *flag = true;
            }
        }
        Self {
            speakers,
            active,
            frames,
        }
    }

    pub fn silent(frames: usize) -> Self {
        Self {
            speakers: Vec::new(),
            active: Vec::new(),
            frames,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn speakers(&self) -> &[String] {
        &self.speakers
    }

    pub fn is_active(&self, speaker: usize, frame: usize) -> bool {
        self.active[speaker][frame]
    }

    pub fn count(&self, frame: usize) -> u32 {
        self.active.iter().filter(|row| row[frame]).count() as u32
    }

    pub fn counts(&self) -> Vec<u32> {
        (0..self.frames).map(|t| self.count(t)).collect()
    }

    /// Set of active speakers at a frame, as a sorted index list.
    pub fn active_set(&self, frame: usize) -> Vec<usize> {
        (0..self.active.len()).filter(|&s| self.active[s][frame]).collect()
    }

    /// Frames `[start, start + len)`; frames past the end are silent.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        let active = self
            .active
            .iter()
            .map(|row| {
                (start..start + len)
                    .map(|t| row.get(t).copied().unwrap_or(false))
                    .collect()
            })
            .collect();
        Self {
            speakers: self.speakers.clone(),
            active,
            frames: len,
        }
    }

    /// Prefixes every speaker name, e.g. with the recording id.
    pub fn qualified(mut self, prefix: &str) -> Self {
        for s in &mut self.speakers {
            *s = format!("{prefix}/{s}");
        }
        self
    }

    /// Union of two activity maps over the same frames. A speaker present in
    /// both is counted once.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.frames != other.frames {
            return Err(Error::DimMismatch {
                expected: self.frames,
                got: other.frames,
            });
        }
        let mut out = self.clone();
        for (name, row) in other.speakers.iter().zip(&other.active) {
            match out.speakers.iter().position(|s| s == name) {
                Some(i) => out.active[i].iter_mut().zip(row).for_each(|(a, &b)| *a |= b),
                None => {
                    out.speakers.push(name.clone());
                    out.active.push(row.clone());
                }
            }
        }
        Ok(out)
    }

    /// Frames where the set of active speakers differs from the previous frame.
    pub fn change_points(&self) -> Vec<usize> {
        (1..self.frames)
            .filter(|&t| self.active.iter().any(|row| row[t] != row[t - 1]))
            .collect()
    }
}

/// Number of active speakers at each frame centre.
pub fn speaker_count(annotations: &AnnotationSet, frames: usize) -> Vec<u32> {
    SpeakerActivity::from_annotations(annotations, frames).counts()
}

/// Frame targets for one task: binary for VAD/OSD, `[0, 1]` curve for SCD.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTargets {
    pub task: Task,
    pub values: Vec<f32>,
}

impl FrameTargets {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn threshold_counts(counts: &[u32], min_speakers: u32, task: Task) -> FrameTargets {
    FrameTargets {
        task,
        values: counts
            .iter()
            .map(|&c| if c >= min_speakers { 1.0 } else { 0.0 })
            .collect(),
    }
}

pub fn vad_targets(annotations: &AnnotationSet, frames: usize) -> FrameTargets {
    threshold_counts(&speaker_count(annotations, frames), 1, Task::Vad)
}

pub fn osd_targets(annotations: &AnnotationSet, frames: usize) -> FrameTargets {
    threshold_counts(&speaker_count(annotations, frames), 2, Task::Osd)
}

/// Speaker turns, speech onsets/offsets and overlap boundaries as frame indices.
pub fn change_points(annotations: &AnnotationSet) -> Vec<usize> {
    SpeakerActivity::from_annotations(annotations, annotations.frames()).change_points()
}

/// Max-combined Gaussian bumps centred at `points`, truncated beyond 4 sigma.
pub fn scd_curve(points: &[usize], frames: usize, sigma2: f64) -> Vec<f32> {
    let sigma = sigma2.sqrt();
    let reach = (4.0 * sigma).floor() as usize;
    let mut curve = vec![0f32; frames];
    for &c in points {
        let lo = c.saturating_sub(reach);
        let hi = (c + reach + 1).min(frames);
        for (t, y) in curve.iter_mut().enumerate().take(hi).skip(lo) {
            let d = t as f64 - c as f64;
            let v = (-d * d / (2.0 * sigma2)).exp() as f32;
            if v > *y {
                *y = v;
            }
        }
    }
    curve
}

/// Draws the SCD target variance for one training example.
pub fn sample_scd_sigma2<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(SCD_SIGMA2_RANGE.0..=SCD_SIGMA2_RANGE.1)
}

pub fn scd_targets<R: Rng + ?Sized>(annotations: &AnnotationSet, frames: usize, rng: &mut R) -> FrameTargets {
    let activity = SpeakerActivity::from_annotations(annotations, frames);
    FrameTargets {
        task: Task::Scd,
        values: scd_curve(&activity.change_points(), frames, sample_scd_sigma2(rng)),
    }
}

/// Targets derived from an activity map. `sigma2` is only used for SCD.
pub fn targets_from_activity(activity: &SpeakerActivity, task: Task, sigma2: f64) -> FrameTargets {
    match task {
        Task::Vad => threshold_counts(&activity.counts(), 1, task),
        Task::Osd => threshold_counts(&activity.counts(), 2, task),
        Task::Scd => FrameTargets {
            task,
            values: scd_curve(&activity.change_points(), activity.frames(), sigma2),
        },
    }
}

/// A waveform chunk with its frame-level speaker activity.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledChunk {
    pub wave: MultichannelWaveform,
    pub activity: SpeakerActivity,
}

/// SNR range, in dB, of the interfering chunk in overlap augmentation.
pub const OVERLAP_SNR_RANGE: (f64, f64) = (0.0, 10.0);

/// Mixes `b` into `a` at a random SNR in [0, 10] dB and unions the activity.
pub fn overlap_augment<R: Rng + ?Sized>(a: &LabeledChunk, b: &LabeledChunk, rng: &mut R) -> Result<LabeledChunk> {
    if a.wave.channels() != b.wave.channels() {
        return Err(Error::DimMismatch {
            expected: a.wave.channels(),
            got: b.wave.channels(),
        });
    }
    let snr_db = rng.random_range(OVERLAP_SNR_RANGE.0..=OVERLAP_SNR_RANGE.1);
    let (pa, pb) = (a.wave.power(), b.wave.power());
    let gain = if pa > 0.0 && pb > 0.0 {
        (pa / pb / 10f64.powf(snr_db / 10.0)).sqrt()
    } else {
        1.0
    };
    Ok(LabeledChunk {
        wave: a.wave.mix(&b.wave, gain as f32)?,
        activity: a.activity.union(&b.activity)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::array_sim::ArrayGeometry;

    fn ann(segs: &[(&str, f64, f64)], duration: f64) -> AnnotationSet {
        AnnotationSet::new(
            "r",
            duration,
            segs.iter().map(|&(s, a, b)| Segment::new(s, a, b)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn speaker_count_examples() {
        assert!(speaker_count(&ann(&[], 3.0), 300).iter().all(|&c| c == 0));

        let c = speaker_count(&ann(&[("A", 0.0, 1.0)], 3.0), 300);
        assert!(c[..100].iter().all(|&x| x == 1));
        assert!(c[100..].iter().all(|&x| x == 0));

        let c = speaker_count(&ann(&[("A", 0.0, 2.0), ("B", 1.0, 3.0)], 3.0), 300);
        assert!(c[..100].iter().all(|&x| x == 1));
        assert!(c[100..200].iter().all(|&x| x == 2));
        assert!(c[200..].iter().all(|&x| x == 1));
    }

    #[test]
    fn vad_osd_examples() {
        let a = ann(&[("A", 0.0, 2.0), ("B", 1.0, 3.0)], 4.0);
        let vad = vad_targets(&a, 400);
        let osd = osd_targets(&a, 400);
        assert!(vad.values[..300].iter().all(|&v| v == 1.0));
        assert!(vad.values[300..].iter().all(|&v| v == 0.0));
        assert!(osd.values[100..200].iter().all(|&v| v == 1.0));
        assert_eq!(osd.values.iter().filter(|&&v| v == 1.0).count(), 100);

        let empty = ann(&[], 1.0);
        assert!(vad_targets(&empty, 100).values.iter().all(|&v| v == 0.0));

        let single = ann(&[("A", 0.0, 1.0)], 2.0);
        assert_eq!(vad_targets(&single, 200).values.iter().sum::<f32>(), 100.0);
        assert!(osd_targets(&single, 200).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn change_point_examples() {
        assert_eq!(change_points(&ann(&[("A", 1.0, 2.0)], 3.0)), vec![100, 200]);
        assert_eq!(change_points(&ann(&[("A", 0.0, 1.5), ("B", 1.5, 3.0)], 3.0)), vec![150]);
        assert!(change_points(&ann(&[], 5.0)).is_empty());
        // Overlap onset and offset are changes too.
        assert_eq!(
            change_points(&ann(&[("A", 0.0, 2.0), ("B", 1.0, 3.0)], 3.0)),
            vec![100, 200]
        );
    }

    #[test]
    fn scd_curve_examples() {
        assert!(scd_curve(&[], 50, 4.0).iter().all(|&v| v == 0.0));

        let y = scd_curve(&[20], 50, 4.0);
        assert_eq!(y[20], 1.0);
        assert!((y[22] as f64 - (-0.5f64).exp()).abs() < 1e-6);
        assert!((y[18] as f64 - 0.606_530_66).abs() < 1e-6);
        // Truncated beyond 4 sigma = 8 frames.
        assert!(y[28] > 0.0);
        assert_eq!(y[29], 0.0);
        assert_eq!(y[11], 0.0);

        let y = scd_curve(&[10, 13], 30, 4.0);
        let single = scd_curve(&[10], 30, 4.0);
        assert_eq!(y[11], single[11].max(scd_curve(&[13], 30, 4.0)[11]));
        assert!(y.iter().all(|&v| v <= 1.0));
    }

    #[test]
    fn scd_targets_peak_at_changes() {
        let a = ann(&[("A", 0.0, 1.5), ("B", 1.5, 3.0)], 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = scd_targets(&a, 300, &mut rng);
        assert_eq!(t.values[150], 1.0);
        assert_eq!(t.values.iter().filter(|&&v| v == 1.0).count(), 1);
        for d in 1..10 {
            assert_eq!(t.values[150 - d], t.values[150 + d]);
        }
    }

    #[test]
    fn sigma2_within_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let s = sample_scd_sigma2(&mut rng);
            assert!((2.0..=7.0).contains(&s));
        }
    }

    fn chunk(value: f32, activity: SpeakerActivity) -> LabeledChunk {
        let g = ArrayGeometry::uniform(8, 0.1).unwrap();
        let wave = MultichannelWaveform::new(Array2::from_elem((8, 3200), value), 16000, g).unwrap();
        LabeledChunk { wave, activity }
    }

    #[test]
    fn overlap_augment_examples() {
        let full_a = SpeakerActivity::from_annotations(&ann(&[("A", 0.0, 2.0)], 2.0), 200);
        let full_b = SpeakerActivity::from_annotations(&ann(&[("B", 0.0, 2.0)], 2.0), 200);
        let mut rng = ChaCha8Rng::seed_from_u64(3);

        let silent_b = chunk(0.0, SpeakerActivity::silent(200));
        let a = chunk(0.5, full_a.clone());
        let mixed = overlap_augment(&a, &silent_b, &mut rng).unwrap();
        assert_eq!(mixed.activity.counts(), a.activity.counts());

        let b = chunk(0.25, full_b);
        let mixed = overlap_augment(&a, &b, &mut rng).unwrap();
        let osd = targets_from_activity(&mixed.activity, Task::Osd, 4.0);
        assert!(osd.values.iter().all(|&v| v == 1.0));

        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            overlap_augment(&a, &b, &mut rng).unwrap()
        };
        assert_eq!(run(9), run(9));

        let g4 = ArrayGeometry::uniform(4, 0.1).unwrap();
        let narrow = LabeledChunk {
            wave: MultichannelWaveform::new(Array2::zeros((4, 3200)), 16000, g4).unwrap(),
            activity: SpeakerActivity::silent(200),
        };
        assert!(overlap_augment(&a, &narrow, &mut rng).is_err());
    }

    #[test]
    fn union_counts_shared_speaker_once() {
        let a = SpeakerActivity::from_annotations(&ann(&[("A", 0.0, 1.0)], 2.0), 200);
        let b = SpeakerActivity::from_annotations(&ann(&[("A", 0.5, 1.5)], 2.0), 200);
        let u = a.union(&b).unwrap();
        assert_eq!(u.count(70), 1);
        let u = a.clone().qualified("r1").union(&b.qualified("r2")).unwrap();
        assert_eq!(u.count(70), 2);
    }

    #[test]
    fn slice_pads_with_silence() {
        let a = SpeakerActivity::from_annotations(&ann(&[("A", 0.0, 1.0)], 1.0), 100);
        let s = a.slice(90, 20);
        assert_eq!(s.counts()[..10], [1; 10]);
        assert_eq!(s.counts()[10..], [0; 10]);
    }

    #[test]
    fn invalid_segments_rejected() {
        assert!(AnnotationSet::new("r", 1.0, vec![Segment::new("A", 0.5, 0.5)]).is_err());
        assert!(AnnotationSet::new("r", 1.0, vec![Segment::new("A", 0.5, 1.5)]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_annotations() -> impl Strategy<Value = AnnotationSet> {
            proptest::collection::vec((0usize..3, 0u32..500, 1u32..200), 0..8).prop_map(|raw| {
                let mut segs = Vec::new();
                for (spk, start, len) in raw {
                    let s = start as f64 / 100.0;
                    let e = ((start + len).min(600)) as f64 / 100.0;
                    segs.push(Segment::new(["A", "B", "C"][spk], s, e));
                }
                AnnotationSet::new("p", 6.0, segs).unwrap()
            })
        }

        proptest! {
            #[test]
            fn osd_never_exceeds_vad(a in arb_annotations()) {
                let vad = vad_targets(&a, 600);
                let osd = osd_targets(&a, 600);
                for (o, v) in osd.values.iter().zip(&vad.values) {
                    prop_assert!(o <= v);
                }
            }

            #[test]
            fn vad_offsets_are_change_points(a in arb_annotations()) {
                let vad = vad_targets(&a, 600);
                let cps: BTreeSet<usize> = change_points(&a).into_iter().collect();
                for t in 1..600 {
                    if vad.values[t - 1] != vad.values[t] {
                        prop_assert!(cps.contains(&t));
                    }
                }
            }

            #[test]
            fn scd_maxima_at_change_points(a in arb_annotations(), sigma2 in 2.0f64..7.0) {
                let cps = change_points(&a);
                let y = scd_curve(&cps, 600, sigma2);
                for (t, &v) in y.iter().enumerate() {
                    prop_assert!((0.0..=1.0).contains(&v));
                    prop_assert_eq!(v == 1.0, cps.contains(&t));
                }
            }
        }
    }
}
