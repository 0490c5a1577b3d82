use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use chseg::array_sim::{deactivate_channels, gen_scenario, ArrayGeometry, DEFAULT_RADIUS, SPEED_OF_SOUND};
use chseg::corpus::{load_corpus, write_recording};
use chseg::eval::{
    evaluate_scored, infer_recording, score_files, Aggregation, ScoredFile, SlidingConfig, Tuned, DEFAULT_MIN_DISTANCE,
};
use chseg::features::spatial::{opposed_pairs, BrokenPairPolicy};
use chseg::features::{ExtractOptions, FeatureExtractor, FeatureRecipe};
use chseg::io::{read_wav, write_features};
use chseg::labeling::{SpeakerActivity, Task};
use chseg::nn::{train, Recording, SegmentationModel};
use chseg::run_config::RunConfig;
use chseg::scenes::SimulationSpec;

#[derive(Parser)]
#[command(name = "chseg", version, about = "Multichannel speech segmentation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render simulated scenes to WAV + RTTM with a scenario manifest.
    Simulate {
        /// TOML file with [[scenario]] and/or [[generate]] tables.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract a feature matrix from one multichannel WAV.
    Extract {
        #[arg(long)]
        wav: PathBuf,
        /// Recipe such as `mfcc+ch_doa`.
        #[arg(long)]
        features: FeatureRecipe,
        #[arg(long)]
        out: PathBuf,
        /// 0-based channels to switch off before extraction.
        #[arg(long, value_delimiter = ',')]
        drop_channels: Vec<usize>,
        #[command(flatten)]
        array: ArrayArgs,
    },
    /// Train a labeler from a run configuration.
    Train {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a trained model on a corpus directory.
    Evaluate {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        model: PathBuf,
        /// Directory of `<rec>.wav` + `<rec>.rttm`.
        #[arg(long)]
        data: PathBuf,
        /// Development corpus for threshold tuning; without it the
        /// threshold defaults to 0.5.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Tsv)]
        format: Format,
        /// Report file; stdout by default.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        window: usize,
        #[arg(long, default_value_t = 50)]
        hop: usize,
        #[arg(long, default_value = "mean")]
        aggregation: Aggregation,
        /// Candidate SCD peak distances in frames.
        #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15, 20, 30, 40, 50])]
        min_distances: Vec<usize>,
        #[command(flatten)]
        array: ArrayArgs,
    },
}

#[derive(clap::Args)]
struct ArrayArgs {
    /// Array radius in metres.
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    radius: f64,
    #[arg(long, default_value_t = SPEED_OF_SOUND)]
    speed_of_sound: f64,
}

impl ArrayArgs {
    fn geometry(&self, mics: usize) -> Result<ArrayGeometry> {
        Ok(ArrayGeometry::uniform(mics, self.radius)?.with_speed_of_sound(self.speed_of_sound)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { spec, out } => simulate(&spec, &out),
        Command::Extract {
            wav,
            features,
            out,
            drop_channels,
            array,
        } => extract(&wav, features, &out, &drop_channels, &array),
        Command::Train { task, config, seed } => train_cmd(task, &config, seed),
        Command::Evaluate {
            task,
            model,
            data,
            dev,
            format,
            out,
            window,
            hop,
            aggregation,
            min_distances,
            array,
        } => {
            let sliding = SlidingConfig {
                window,
                hop,
                aggregation,
            };
            evaluate(
                task,
                &model,
                &data,
                dev.as_deref(),
                format,
                out.as_deref(),
                sliding,
                &min_distances,
                &array,
            )
        }
    }
}

fn simulate(spec_path: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let scenarios = SimulationSpec::from_toml(&text)?.scenarios()?;
    fs::create_dir_all(out)?;
    for s in &scenarios {
        let (wave, annotations) = gen_scenario(s)?;
        write_recording(out, &wave, &annotations)?;
    }
    let manifest = serde_json::json!({ "scenarios": scenarios });
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    log::info!("wrote {} scenes to {}", scenarios.len(), out.display());
    Ok(())
}

fn extract(wav: &Path, recipe: FeatureRecipe, out: &Path, drop: &[usize], array: &ArrayArgs) -> Result<()> {
    let raw = read_wav(wav, None)?;
    let mics = raw.channels();
    let mut wave =
        chseg::array_sim::MultichannelWaveform::new(raw.samples().clone(), raw.sample_rate(), array.geometry(mics)?)?;
    if let Some(&bad) = drop.iter().find(|&&c| c >= mics) {
        bail!("cannot drop channel {bad}: the file has {mics} channels");
    }
    if !drop.is_empty() {
        let keep: Vec<usize> = (0..mics).filter(|c| !drop.contains(c)).collect();
        wave = deactivate_channels(&wave, &keep)?;
    }
    let options = ExtractOptions {
        ipd_pairs: opposed_pairs(mics),
        broken_pairs: BrokenPairPolicy::ZeroFill,
        ..ExtractOptions::default()
    };
    let features = FeatureExtractor::new(recipe, options).extract(&wave)?.into_values();
    write_features(out, &features)?;
    log::info!(
        "{}: {} dims x {} frames",
        out.display(),
        features.nrows(),
        features.ncols()
    );
    Ok(())
}

fn train_cmd(task: Task, config: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    let task = cfg.resolve_task(task)?;
    if let Some(seed) = seed {
        cfg.train.seed = seed;
    }
    let geometry = cfg.array.geometry()?;
    let train_set = load_corpus(&cfg.data.train, Some(&geometry))?;
    let dev_set = match &cfg.data.dev {
        Some(dir) => load_corpus(dir, Some(&geometry))?,
        None => Vec::new(),
    };
    log::info!(
        "training {task} on {} recordings ({} dev), features {} ({} dims)",
        train_set.len(),
        dev_set.len(),
        cfg.features,
        cfg.feature_dim()
    );
    let (model, report) = train(
        &train_set,
        &dev_set,
        task,
        &cfg.features,
        &cfg.array.extract_options(),
        &cfg.train,
    )?;
    if let Some(parent) = cfg.output.model.parent() {
        fs::create_dir_all(parent)?;
    }
    model.save(&cfg.output.model)?;
    let log_path = cfg.log_path();
    if let Some(parent) = log_path.parent() {
        fs::create_dir_all(parent)?;
    }
    let log = serde_json::json!({
        "task": task,
        "features": cfg.features,
        "parameters": model.net.param_count(),
        "train": cfg.train,
        "report": report,
    });
    fs::write(&log_path, serde_json::to_string_pretty(&log)?)?;
    log::info!(
        "kept epoch {} of {}; model written to {}",
        report.best_epoch,
        report.epochs.len(),
        cfg.output.model.display()
    );
    Ok(())
}

fn score(
    model: &SegmentationModel,
    recs: &[Recording],
    sliding: &SlidingConfig,
) -> Result<Vec<(Vec<f32>, SpeakerActivity)>> {
    let options = ExtractOptions::default();
    recs.iter()
        .map(|r| {
            let scores =
                infer_recording(model, &r.wave, &options, sliding).with_context(|| format!("scoring {}", r.id()))?;
            Ok((scores, r.activity()))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    task: Task,
    model_path: &Path,
    data: &Path,
    dev: Option<&Path>,
    format: Format,
    out: Option<&Path>,
    sliding: SlidingConfig,
    distances: &[usize],
    array: &ArrayArgs,
) -> Result<()> {
    let model = SegmentationModel::load(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    if model.task != task {
        bail!(
            "model {} was trained for {} but {task} was requested",
            model_path.display(),
            model.task
        );
    }
    let load = |dir: &Path| -> Result<Vec<Recording>> {
        let mut recs = load_corpus(dir, None)?;
        for r in &mut recs {
            let geometry = array.geometry(r.wave.channels())?;
            r.wave =
                chseg::array_sim::MultichannelWaveform::new(r.wave.samples().clone(), r.wave.sample_rate(), geometry)?;
        }
        Ok(recs)
    };
    let test_recs = load(data)?;
    let test_scores = score(&model, &test_recs, &sliding)?;
    let test: Vec<(String, ScoredFile)> = test_recs
        .iter()
        .zip(&test_scores)
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
    let report = match dev {
        Some(dir) => {
            let dev_recs = load(dir)?;
            let dev_scores = score(&model, &dev_recs, &sliding)?;
            let dev: Vec<ScoredFile> = dev_scores
                .iter()
                .map(|(s, a)| ScoredFile {
                    scores: s,
                    reference: a,
                })
                .collect();
            evaluate_scored(task, &dev, &test, distances)?
        }
        None => {
            log::warn!("no development set given; using threshold 0.5 and peak distance {DEFAULT_MIN_DISTANCE}");
            let tuned = Tuned {
                threshold: 0.5,
                min_distance: DEFAULT_MIN_DISTANCE,
            };
            score_files(task, &tuned, &test)?
        }
    };
    let text = match format {
        Format::Tsv => report.to_tsv(),
        Format::Json => report.to_json()? + "\n",
    };
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
