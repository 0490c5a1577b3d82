//! Acceptance criteria, one PASS/FAIL line each.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use chseg::array_sim::{
    angle_diff, deactivate_channels, gen_scenario, synth_plane_wave, ArrayGeometry, MultichannelWaveform, SignalKind,
};
use chseg::dsp::stft;
use chseg::eval::{average_precision, evaluate_scored, infer_recording, purity_coverage, ScoredFile, SlidingConfig};
use chseg::features::spatial::{ch_doa_angles, ipd, opposed_pairs, ModalParams};
use chseg::features::{ExtractOptions, FeatureExtractor, FeatureKind, FeatureRecipe};
use chseg::labeling::{osd_targets, vad_targets, AnnotationSet, Segment, SpeakerActivity, Task};
use chseg::nn::{train, Recording, TcnConfig, TrainConfig};
use chseg::run_config::TuningConfig;
use chseg::scenes::{GenerateSpec, SceneKind};
use chseg::Error;
use common::grad::{gradient_check, tiny};
use common::{brute_force_ap, brute_force_purity_coverage, random_activity, random_points, random_ranking};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass,
    Fail,
    OutOfScope,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn judged(pass: bool, detail: String) -> Outcome {
    Outcome {
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

/// Energy-weighted mean absolute CH-DOA error (degrees) of a stationary tone
/// arriving from `azimuth`, over every bin and frame.
fn tone_doa_error(wave: &MultichannelWaveform, azimuth: f64) -> f64 {
    let s = stft(wave).unwrap();
    let d = ch_doa_angles(&s, &ModalParams::default()).unwrap();
    let x = s.channel(0);
    let (mut num, mut den) = (0.0, 0.0);
    for ((bin, t), &phi) in d.indexed_iter() {
        let e = x[[bin, t]].norm_sqr();
        num += e * angle_diff(phi, azimuth).abs();
        den += e;
    }
    (num / den).to_degrees()
}

const DOA_FREQS: [f64; 5] = [300.0, 500.0, 800.0, 1000.0, 1500.0];

/// Mean error per frequency over 36 azimuths, with `keep` channels alive.
fn doa_sweep(keep: Option<&[usize]>) -> Vec<f64> {
    let g = ArrayGeometry::uniform(8, 0.1).unwrap();
    DOA_FREQS
        .iter()
        .map(|&f| {
            let tone: Vec<f64> = (0..8000).map(|i| (TAU * f * i as f64 / 16000.0).cos()).collect();
            (0..36)
                .map(|k| {
                    let az = (k as f64 * 10.0).to_radians();
                    let mut w = synth_plane_wave(&g, az, &tone, 16000).unwrap();
                    if let Some(keep) = keep {
                        w = deactivate_channels(&w, keep).unwrap();
                    }
                    tone_doa_error(&w, az)
                })
                .sum::<f64>()
                / 36.0
        })
        .collect()
}

fn per_freq(errors: &[f64]) -> String {
    DOA_FREQS
        .iter()
        .zip(errors)
        .map(|(f, e)| format!("{f:.0}Hz {e:.2}°"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let errors = doa_sweep(None);
    let secs = start.elapsed().as_secs_f64();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let worst = errors.iter().copied().fold(0.0, f64::max);
    judged(
        worst <= 2.0 && secs < 5.0,
        format!(
            "M=8 mean error {mean:.3}°, worst frequency {worst:.3}° ({}) in {secs:.2}s; need ≤ 2° and < 5 s",
            per_freq(&errors)
        ),
    )
}

fn criterion_2() -> Outcome {
    let keep = [1, 3, 5, 7];
    let errors = doa_sweep(Some(&keep));
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let g = ArrayGeometry::uniform(8, 0.1).unwrap();
    let w = synth_plane_wave(&g, 0.5, &vec![1.0; 4000], 16000).unwrap();
    let broken = deactivate_channels(&w, &keep).unwrap();
    let ipd_undefined = matches!(
        ipd(&stft(&broken).unwrap(), &opposed_pairs(8)),
        Err(Error::InactivePair(..))
    );
    judged(
        mean <= 5.0 && ipd_undefined,
        format!(
            "M=4 survivors {{1,3,5,7}} mean error {mean:.3}° ({}); need ≤ 5°; IPD on broken pairs undefined: {ipd_undefined}",
            per_freq(&errors)
        ),
    )
}

fn criterion_3() -> Outcome {
    let g = ArrayGeometry::uniform(8, 0.1).unwrap();
    let signal: Vec<f64> = (0..16000).map(|i| ((i * 7919) % 113) as f64 / 56.0 - 1.0).collect();
    let w = synth_plane_wave(&g, 1.0, &signal, 16000).unwrap();
    let expected = [
        (FeatureKind::LogMel, 80),
        (FeatureKind::Mfcc, 59),
        (FeatureKind::Ipd, 1028),
        (FeatureKind::Csipd, 2056),
        (FeatureKind::ChDoa, 257),
    ];
    let mut ok = true;
    let mut got = Vec::new();
    for (kind, dim) in expected {
        let recipe = FeatureRecipe::new(vec![kind]).unwrap();
        let f = FeatureExtractor::new(recipe, ExtractOptions::default())
            .extract(&w)
            .unwrap();
        ok &= f.dim() == dim;
        got.push(format!("{}={}", kind.name(), f.dim()));
    }
    judged(ok, format!("dims {}; expected 80/59/1028/2056/257", got.join(" ")))
}

fn criterion_4() -> Outcome {
    let cases = [(59, 0.26), (59 + 257, 0.28), (59 + 1028, 0.33), (59 + 2056, 0.40)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (f, target) in cases {
        let m = TcnConfig::for_task(f, Task::Vad).param_count() as f64 / 1e6;
        let rel = (m - target) / target;
        ok &= rel.abs() <= 0.15;
        parts.push(format!("F={f}: {m:.3}M vs {target}M ({:+.1}%)", 100.0 * rel));
    }
    judged(ok, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let mut total = 0;
    let mut expected = 0;
    let mut failures = Vec::new();
    for (task, seed) in [(Task::Vad, 5), (Task::Scd, 6)] {
        let cfg = tiny(task);
        let (checked, f) = gradient_check(&cfg, task, 24, seed);
        total += checked;
        expected += cfg.param_count();
        failures.extend(f);
    }
    judged(
        failures.is_empty() && total == expected,
        format!(
            "f64 central differences: {total}/{expected} parameters checked, {} outside 1e-3 relative tolerance",
            failures.len()
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ap_bad = 0;
    let mut ap_dev: f64 = 0.0;
    for _ in 0..200 {
        let (scores, labels) = random_ranking(&mut rng, 20);
        let ap = average_precision(&scores, &labels).unwrap();
        let oracle = brute_force_ap(&scores, &labels);
        ap_dev = ap_dev.max((ap - oracle).abs());
        ap_bad += usize::from((ap - oracle).abs() > 1e-12);
    }
    let mut pc_bad = 0;
    for _ in 0..200 {
        let reference = random_activity(&mut rng, 20, 5);
        let hyp = random_points(&mut rng, reference.frames());
        let s = purity_coverage(&hyp, &reference).unwrap();
        pc_bad += usize::from((s.purity, s.coverage) != brute_force_purity_coverage(&hyp, &reference));
    }
    let hand_ap = average_precision(&[0.9, 0.8, 0.3], &[true, false, true]).unwrap();
    let ann = AnnotationSet::new(
        "hand",
        20.0,
        vec![Segment::new("A", 0.0, 10.0), Segment::new("B", 10.0, 20.0)],
    )
    .unwrap();
    let hand = purity_coverage(&[], &SpeakerActivity::from_annotations(&ann, ann.frames())).unwrap();
    let hand_ok = (hand_ap - 5.0 / 6.0).abs() <= 1e-12 && hand.purity == 50.0 && hand.coverage == 100.0;
    judged(
        ap_bad == 0 && pc_bad == 0 && hand_ok,
        format!(
            "AP mismatches {ap_bad}/200 (max deviation {ap_dev:.1e} from exact rational), purity/coverage mismatches {pc_bad}/200; \
             hand AP {hand_ap:.4}, P {:.1}% C {:.1}% SER {:.1}%",
            hand.purity, hand.coverage, hand.ser
        ),
    )
}

fn render(spec: GenerateSpec) -> Vec<Recording> {
    spec.scenarios()
        .unwrap()
        .iter()
        .map(|s| {
            let (wave, annotations) = gen_scenario(s).unwrap();
            Recording { wave, annotations }
        })
        .collect()
}

/// Ten-second scenes of constant-level white-noise talkers.
fn scene_set(kind: SceneKind, count: usize, seed: u64, prefix: &str, snr: f64) -> Vec<Recording> {
    render(GenerateSpec {
        prefix: Some(prefix.into()),
        noise_snr: Some(snr),
        signal: Some(SignalKind::WhiteNoise),
        ..GenerateSpec::new(kind, count, seed)
    })
}

/// Trains on `train_set` and returns aggregate test metrics tuned on `dev_set`.
fn train_and_score(
    task: Task,
    recipe: &str,
    cfg: &TrainConfig,
    train_set: &[Recording],
    dev_set: &[Recording],
    test_set: &[Recording],
) -> std::collections::BTreeMap<String, f64> {
    let recipe: FeatureRecipe = recipe.parse().unwrap();
    let options = ExtractOptions::default();
    let (model, _) = train(train_set, dev_set, task, &recipe, &options, cfg).unwrap();
    let sliding = SlidingConfig::default();
    let score = |set: &[Recording]| -> Vec<(Vec<f32>, SpeakerActivity)> {
        set.iter()
            .map(|r| {
                (
                    infer_recording(&model, &r.wave, &options, &sliding).unwrap(),
                    r.activity(),
                )
            })
            .collect()
    };
    let (dev, test) = (score(dev_set), score(test_set));
    let dev: Vec<ScoredFile> = dev
        .iter()
        .map(|(s, a)| ScoredFile {
            scores: s,
            reference: a,
        })
        .collect();
    let test: Vec<(String, ScoredFile)> = test_set
        .iter()
        .zip(&test)
        .map(|(r, (s, a))| {
            (
                r.id().to_string(),
                ScoredFile {
                    scores: s,
                    reference: a,
                },
            )
        })
        .collect();
    evaluate_scored(task, &dev, &test, &TuningConfig::default().min_distances)
        .unwrap()
        .aggregate
}

/// Mean SER of change points placed every `period` frames, ignoring the audio.
fn periodic_ser(set: &[Recording], period: usize) -> f64 {
    set.iter()
        .map(|r| {
            let points: Vec<usize> = (1..).map(|k| k * period).take_while(|&p| p < r.frames()).collect();
            purity_coverage(&points, &r.activity()).unwrap().ser
        })
        .sum::<f64>()
        / set.len() as f64
}

/// Best information-free segmentation: the period is tuned on `dev`.
fn periodic_baseline(dev: &[Recording], test: &[Recording]) -> f64 {
    let period = (10..=1000)
        .step_by(10)
        .max_by(|&a, &b| periodic_ser(dev, a).total_cmp(&periodic_ser(dev, b)))
        .unwrap();
    periodic_ser(test, period)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let train_set = scene_set(SceneKind::Turns, 50, 700, "train", 20.0);
    let dev_set = scene_set(SceneKind::Turns, 10, 701, "dev", 20.0);
    let test_set = scene_set(SceneKind::Turns, 20, 702, "test", 20.0);
    let cfg = TrainConfig::default();
    let spatial = train_and_score(Task::Scd, "mfcc+ch_doa", &cfg, &train_set, &dev_set, &test_set);
    let acoustic = train_and_score(Task::Scd, "mfcc", &cfg, &train_set, &dev_set, &test_set);
    let secs = start.elapsed().as_secs_f64();
    let (s, a) = (spatial["ser"], acoustic["ser"]);
    judged(
        s >= 80.0 && a <= 60.0 && secs < 1800.0,
        format!(
            "SER mfcc+ch_doa {s:.1}% (P {:.1} C {:.1}), mfcc {a:.1}% (P {:.1} C {:.1}); need ≥ 80 / ≤ 60; \
             audio-blind periodic segmentation scores {:.1}%; {:.0}s",
            spatial["purity"],
            spatial["coverage"],
            acoustic["purity"],
            acoustic["coverage"],
            periodic_baseline(&dev_set, &test_set),
            secs
        ),
    )
}

fn criterion_8() -> Outcome {
    let train_set = scene_set(SceneKind::Overlap, 50, 800, "train", 10.0);
    let dev_set = scene_set(SceneKind::Overlap, 10, 801, "dev", 10.0);
    let test_set = scene_set(SceneKind::Overlap, 20, 802, "test", 10.0);
    let mut frames = 0;
    let mut violations = 0;
    for r in train_set.iter().chain(&dev_set).chain(&test_set) {
        let (vad, osd) = (
            vad_targets(&r.annotations, r.frames()),
            osd_targets(&r.annotations, r.frames()),
        );
        frames += vad.len();
        violations += osd.values.iter().zip(&vad.values).filter(|(o, v)| o > v).count();
    }
    // 500 s of audio gives only 4 default-sized batches per epoch, too few
    // optimizer steps for the rarer overlap class.
    let cfg = TrainConfig {
        batch_size: 32,
        batches_per_epoch: Some(30),
        ..TrainConfig::default()
    };
    let m = train_and_score(Task::Osd, "mfcc+ch_doa", &cfg, &train_set, &dev_set, &test_set);
    judged(
        m["ap"] >= 85.0 && violations == 0,
        format!(
            "OSD AP {:.1}% (P {:.1} R {:.1}) at 10 dB; need ≥ 85; osd > vad on {violations}/{frames} frames",
            m["ap"], m["precision"], m["recall"]
        ),
    )
}

fn criterion_9() -> Outcome {
    Outcome {
        verdict: Verdict::OutOfScope,
        detail:
            "absolute AMI results need the licensed corpus and GPU-scale training; the recipe runs via `chseg train`"
                .into(),
    }
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 9] = [
        (1, "DOA recovery", criterion_1),
        (2, "channel deactivation", criterion_2),
        (3, "feature dimensions", criterion_3),
        (4, "parameter counts", criterion_4),
        (5, "gradient correctness", criterion_5),
        (6, "metric oracles", criterion_6),
        (7, "synthetic SCD", criterion_7),
        (8, "synthetic OSD", criterion_8),
        (9, "AMI tables", criterion_9),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let label = match out.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::OutOfScope => "SKIP (out of scope)",
        };
        println!(
            "{label} criterion {n} {name}: {} [{:.1}s]",
            out.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} failing");
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
