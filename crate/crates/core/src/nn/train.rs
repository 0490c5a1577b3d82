//! Crop sampling, augmentation and the optimization loop.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::SegmentationModel;
use super::config::TcnConfig;
use super::tcn::Tcn;
use super::{loss_and_grad, Adam};
use crate::array_sim::MultichannelWaveform;
use crate::dsp::{frame_count, samples_for_frames, HOP_LENGTH};
use crate::error::{Error, Result};
use crate::features::acoustic::{mask_in_place, MaskParams};
use crate::features::{ExtractOptions, FeatureExtractor, FeatureRecipe, FeatureStats};
use crate::labeling::{
    overlap_augment, sample_scd_sigma2, targets_from_activity, AnnotationSet, LabeledChunk, SpeakerActivity, Task,
    SCD_SIGMA2_RANGE,
};

/// A recording with its reference annotation.
#[derive(Debug, Clone)]
pub struct Recording {
    pub wave: MultichannelWaveform,
    pub annotations: AnnotationSet,
}

impl Recording {
    pub fn id(&self) -> &str {
        self.annotations.recording_id()
    }

    pub fn frames(&self) -> usize {
        frame_count(self.wave.len())
    }

    pub fn activity(&self) -> SpeakerActivity {
        SpeakerActivity::from_annotations(&self.annotations, self.frames())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub crop_frames: usize,
    /// Probability that an example is mixed with a second random crop.
    pub overlap_prob: f64,
    pub mask: MaskParams,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    /// Batches per epoch; by default the training frames divided by
    /// `crop_frames * batch_size`, rounded up.
    pub batches_per_epoch: Option<usize>,
    /// Extra label context on each side of a crop so that SCD bumps near
    /// crop edges match the full-recording targets.
    pub scd_margin: usize,
    pub seed: u64,
    pub bottleneck_dim: usize,
    pub hidden_dim: usize,
    pub num_blocks: usize,
    pub layers_per_block: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            crop_frames: 200,
            overlap_prob: 0.5,
            mask: MaskParams::default(),
            patience: 10,
            batches_per_epoch: None,
            scd_margin: 16,
            seed: 0,
            bottleneck_dim: 64,
            hidden_dim: 64,
            num_blocks: 3,
            layers_per_block: 5,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self, input_dim: usize, task: Task) -> TcnConfig {
        TcnConfig {
            bottleneck_dim: self.bottleneck_dim,
            hidden_dim: self.hidden_dim,
            num_blocks: self.num_blocks,
            layers_per_block: self.layers_per_block,
            ..TcnConfig::for_task(input_dim, task)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.crop_frames == 0 {
            return Err(Error::Config("batch_size and crop_frames must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.overlap_prob) {
            return Err(Error::Config("overlap_prob must lie in [0, 1]".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// A recording with its full-length raw features.
struct Prepared<'a> {
    rec: &'a Recording,
    features: Array2<f32>,
    activity: SpeakerActivity,
}

/// One batch: features (B, F, T) normalized and augmented, and targets (B, T).
#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Array3<f32>,
    pub targets: Array2<f32>,
}

/// Draws training batches from a set of recordings.
pub struct BatchSampler<'a> {
    task: Task,
    cfg: TrainConfig,
    extractor: &'a FeatureExtractor,
    stats: FeatureStats,
    acoustic_rows: std::ops::Range<usize>,
    data: Vec<Prepared<'a>>,
    total_frames: usize,
}

impl<'a> BatchSampler<'a> {
    /// Extracts features for every recording and fits normalization on them.
    pub fn new(
        recordings: &'a [Recording],
        extractor: &'a FeatureExtractor,
        task: Task,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        if recordings.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let data = prepare(recordings, extractor)?;
        let stats = FeatureStats::fit(data.iter().map(|p| &p.features))?;
        let total_frames = data.iter().map(|p| p.features.ncols()).sum();
        Ok(Self {
            task,
            cfg: cfg.clone(),
            extractor,
            stats,
            acoustic_rows: extractor.recipe().acoustic_rows(),
            data,
            total_frames,
        })
    }

    pub fn stats(&self) -> &FeatureStats {
        &self.stats
    }

    pub fn feature_dim(&self) -> usize {
        self.stats.dim()
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.cfg.batches_per_epoch.unwrap_or_else(|| {
            let per_batch = self.cfg.crop_frames * self.cfg.batch_size;
            self.total_frames.div_ceil(per_batch).max(1)
        })
    }

    fn random_crop<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        let mut pick = rng.random_range(0..self.total_frames);
        let mut idx = 0;
        for (i, p) in self.data.iter().enumerate() {
            if pick < p.features.ncols() {
                idx = i;
                break;
            }
            pick -= p.features.ncols();
        }
        let frames = self.data[idx].features.ncols();
        let start = rng.random_range(0..=frames.saturating_sub(self.cfg.crop_frames));
        (idx, start)
    }

    /// Label context `(lead, trail)` shared by crops starting at `starts`.
    fn margins(&self, crops: &[(usize, usize)]) -> (usize, usize) {
        let len = self.cfg.crop_frames;
        crops.iter().fold(
            (self.cfg.scd_margin, self.cfg.scd_margin),
            |(lead, trail), &(i, start)| {
                let frames = self.data[i].features.ncols();
                (lead.min(start), trail.min(frames.saturating_sub(start + len)))
            },
        )
    }

    fn labeled(&self, i: usize, start: usize, lead: usize, trail: usize) -> SpeakerActivity {
        let p = &self.data[i];
        p.activity
            .slice(start - lead, lead + self.cfg.crop_frames + trail)
            .qualified(p.rec.id())
    }

    /// One example: raw features (F, L) and targets (L).
    pub fn example<R: Rng>(&self, rng: &mut R) -> Result<(Array2<f32>, Vec<f32>)> {
        let len = self.cfg.crop_frames;
        let first = self.random_crop(rng);
        let augment = self.cfg.overlap_prob > 0.0 && rng.random_bool(self.cfg.overlap_prob);
        let sigma2 = if self.task == Task::Scd {
            sample_scd_sigma2(rng)
        } else {
            0.0
        };
        let (features, activity, lead) = if augment {
            let second = self.random_crop(rng);
            let (lead, trail) = self.margins(&[first, second]);
            let chunk = |(i, start): (usize, usize)| LabeledChunk {
                wave: self.data[i].rec.wave.crop(start * HOP_LENGTH, samples_for_frames(len)),
                activity: self.labeled(i, start, lead, trail),
            };
            let mixed = overlap_augment(&chunk(first), &chunk(second), rng)?;
            let features = self.extractor.extract(&mixed.wave)?.into_values();
            (features, mixed.activity, lead)
        } else {
            let (i, start) = first;
            let (lead, trail) = self.margins(&[first]);
            let src = &self.data[i].features;
            let mut features = Array2::zeros((src.nrows(), len));
            let end = (start + len).min(src.ncols());
            features
                .slice_mut(s![.., ..end - start])
                .assign(&src.slice(s![.., start..end]));
            (features, self.labeled(i, start, lead, trail), lead)
        };
        let targets = targets_from_activity(&activity, self.task, sigma2).values;
        Ok((features, targets[lead..lead + len].to_vec()))
    }

    /// A normalized, masked batch of `batch_size` examples.
    pub fn batch<R: Rng>(&self, rng: &mut R) -> Result<Batch> {
        let (b, f, l) = (self.cfg.batch_size, self.feature_dim(), self.cfg.crop_frames);
        let mut features = Array3::zeros((b, f, l));
        let mut targets = Array2::zeros((b, l));
        for k in 0..b {
            let (mut x, y) = self.example(rng)?;
            self.stats.apply(&mut x)?;
            mask_in_place(&mut x, self.acoustic_rows.clone(), &self.cfg.mask, rng);
            features.index_axis_mut(Axis(0), k).assign(&x);
            targets.row_mut(k).assign(&ndarray::ArrayView1::from(&y));
        }
        Ok(Batch { features, targets })
    }
}

fn prepare<'a>(recordings: &'a [Recording], extractor: &FeatureExtractor) -> Result<Vec<Prepared<'a>>> {
    recordings
        .iter()
        .map(|rec| {
            let features = extractor.extract(&rec.wave)?.into_values();
            let activity = SpeakerActivity::from_annotations(&rec.annotations, features.ncols());
            Ok(Prepared {
                rec,
                features,
                activity,
            })
        })
        .collect()
}

/// Mean loss and summed gradient over one batch.
fn batch_step(net: &Tcn<f32>, batch: &Batch, grad: &mut Tcn<f32>) -> Result<f64> {
    grad.fill_zero();
    let n = batch.features.dim().0;
    let mut total = 0.0;
    for k in 0..n {
        let x = batch.features.index_axis(Axis(0), k);
        let y = batch.targets.row(k);
        let (logits, cache) = net.forward_train(x)?;
        let (l, dlogits) = loss_and_grad(logits.view(), y.as_slice().expect("contiguous"), net.config().head)?;
        net.backward(&cache, dlogits.view(), grad);
        total += l;
    }
    grad.scale(1.0 / n as f32);
    Ok(total / n as f64)
}

/// Start frames of fixed windows covering `frames`, the last one aligned to the end.
pub fn window_starts(frames: usize, window: usize, hop: usize) -> Vec<usize> {
    if frames <= window {
        return vec![0];
    }
    let last = frames - window;
    let mut starts: Vec<usize> = (0..=last).step_by(hop.max(1)).collect();
    if *starts.last().expect("non-empty") != last {
        starts.push(last);
    }
    starts
}

/// Loss on whole dev recordings cut into crop-length windows, without
/// augmentation. SCD targets use the midpoint of the variance range.
fn dev_loss(net: &Tcn<f32>, dev: &[Prepared<'_>], stats: &FeatureStats, task: Task, crop: usize) -> Result<f64> {
    let sigma2 = 0.5 * (SCD_SIGMA2_RANGE.0 + SCD_SIGMA2_RANGE.1);
    let (mut total, mut count) = (0.0, 0usize);
    for p in dev {
        let mut x = p.features.clone();
        stats.apply(&mut x)?;
        let targets = targets_from_activity(&p.activity, task, sigma2).values;
        for start in window_starts(x.ncols(), crop, crop) {
            let end = (start + crop).min(x.ncols());
            let logits = net.logits(x.slice(s![.., start..end]))?;
            total += super::loss(logits.view(), &targets[start..end], net.config().head)?;
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}

/// Trains a labeler for `task`, returning the dev-best model (lowest dev
/// loss, or lowest training loss without a dev set) and the epoch log.
pub fn train(
    train_set: &[Recording],
    dev_set: &[Recording],
    task: Task,
    recipe: &FeatureRecipe,
    options: &ExtractOptions,
    cfg: &TrainConfig,
) -> Result<(SegmentationModel, TrainReport)> {
    cfg.validate()?;
    let extractor = FeatureExtractor::new(recipe.clone(), options.clone());
    let sampler = BatchSampler::new(train_set, &extractor, task, cfg)?;
    let dev = prepare(dev_set, &extractor)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Tcn::<f32>::init(&cfg.model_config(sampler.feature_dim(), task), &mut rng)?;
    let mut grad = Tcn::<f32>::zeros(net.config())?;
    let mut opt = Adam::new(&net, cfg.learning_rate);
    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    log::info!(
        "training {task} on {} recordings, F = {}, {} parameters, {} batches/epoch",
        train_set.len(),
        sampler.feature_dim(),
        net.param_count(),
        sampler.batches_per_epoch()
    );
    for epoch in 1..=cfg.epochs {
        let mut sum = 0.0;
        let n_batches = sampler.batches_per_epoch();
        for _ in 0..n_batches {
            let batch = sampler.batch(&mut rng)?;
            sum += batch_step(&net, &batch, &mut grad)?;
            opt.step(&mut net, &grad)?;
        }
        let train_loss = sum / n_batches as f64;
        let dev_loss = if dev.is_empty() {
            None
        } else {
            Some(dev_loss(&net, &dev, sampler.stats(), task, cfg.crop_frames)?)
        };
        log::info!("epoch {epoch}: train loss {train_loss:.5}, dev loss {dev_loss:?}");
        epochs.push(EpochLog {
            epoch,
            train_loss,
            dev_loss,
        });
        let monitored = dev_loss.unwrap_or(train_loss);
        if monitored < best.0 {
            best = (monitored, net.clone(), epoch);
        } else if epoch - best.2 >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    let model = SegmentationModel {
        task,
        recipe: recipe.clone(),
        ipd_pairs: options.ipd_pairs.clone(),
        stats: sampler.stats().clone(),
        net: best.1,
    };
    let report = TrainReport {
        epochs,
        best_epoch: best.2,
        stopped_early,
    };
    Ok((model, report))
}

/// Runs a model over a normalized (F, T) matrix in one pass.
pub fn predict(model: &SegmentationModel, normalized: ArrayView2<f32>) -> Result<Array2<f32>> {
    model.net.forward(normalized)
}
