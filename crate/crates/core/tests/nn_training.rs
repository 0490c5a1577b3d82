use chseg::array_sim::{gen_scenario, ArraySpec, ScenarioSpec, SignalKind, SourceSpec};
use chseg::features::{ExtractOptions, FeatureRecipe};
use chseg::labeling::Task;
use chseg::nn::{train, Recording, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Speech-like sources switching on and off at random, 20 dB noise.
fn vad_scenes(n: usize, duration: f64, seed: u64) -> Vec<Recording> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut intervals = Vec::new();
            let mut t = rng.random_range(0.0..1.0);
            while t < duration - 0.5 {
                let end = (t + rng.random_range(0.5..3.0)).min(duration);
                intervals.push([t, end]);
                t = end + rng.random_range(0.3..2.0);
            }
            let spec = ScenarioSpec {
                recording_id: format!("vad{i}"),
                duration,
                seed: seed * 1000 + i as u64,
                noise_snr: Some(20.0),
                sources: vec![SourceSpec {
                    id: "s".into(),
                    azimuth: rng.random_range(-3.0..3.0),
                    signal: SignalKind::SpeechLike,
                    intervals,
                    level_db: 0.0,
                }],
                array: ArraySpec::default(),
            };
            let (wave, annotations) = gen_scenario(&spec).unwrap();
            Recording { wave, annotations }
        })
        .collect()
}

#[test]
fn vad_training_loss_halves_in_twenty_epochs() {
    let data = vad_scenes(10, 30.0, 1);
    let recipe: FeatureRecipe = "mfcc".parse().unwrap();
    let (_, report) = train(
        &data,
        &[],
        Task::Vad,
        &recipe,
        &ExtractOptions::default(),
        &TrainConfig::default(),
    )
    .unwrap();
    let first = report.epochs[0].train_loss;
    let last = report.epochs.last().unwrap().train_loss;
    assert_eq!(report.epochs.len(), 20);
    assert!(last <= 0.5 * first, "first {first}, last {last}");
}
