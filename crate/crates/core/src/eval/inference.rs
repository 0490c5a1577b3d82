use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::array_sim::MultichannelWaveform;
use crate::error::{Error, Result};
use crate::features::ExtractOptions;
use crate::labeling::Task;
use crate::nn::{window_starts, SegmentationModel, Tcn};

/// How overlapping window predictions are combined per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
    Max,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "median" => Ok(Self::Median),
            "max" => Ok(Self::Max),
            other => Err(Error::InvalidArgument(format!("unknown aggregation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlidingConfig {
    pub window: usize,
    pub hop: usize,
    pub aggregation: Aggregation,
}

impl Default for SlidingConfig {
    fn default() -> Self {
        Self {
            window: 200,
            hop: 50,
            aggregation: Aggregation::Mean,
        }
    }
}

/// Windows covering a recording of `frames` frames, as start offsets.
pub fn covering_windows(frames: usize, cfg: &SlidingConfig) -> Vec<usize> {
    window_starts(frames, cfg.window, cfg.hop)
}

/// Runs `net` on overlapping windows of normalized features (F, T) and
/// aggregates the activated outputs per frame into a (C, T) matrix.
///
/// A recording no longer than one window is processed in a single pass.
pub fn sliding_inference(net: &Tcn<f32>, features: ArrayView2<f32>, cfg: &SlidingConfig) -> Result<Array2<f32>> {
    if cfg.window == 0 || cfg.hop == 0 {
        return Err(Error::InvalidArgument("window and hop must be positive".into()));
    }
    let frames = features.ncols();
    if frames <= cfg.window {
        return net.forward(features);
    }
    let starts = covering_windows(frames, cfg);
    let outputs = starts
        .iter()
        .map(|&st| net.forward(features.slice(s![.., st..st + cfg.window])))
        .collect::<Result<Vec<_>>>()?;
    let channels = outputs[0].nrows();
    let mut result = Array2::zeros((channels, frames));
    let mut column = Vec::with_capacity(cfg.window / cfg.hop + 2);
    for t in 0..frames {
        for c in 0..channels {
            column.clear();
            for (out, &st) in outputs.iter().zip(&starts) {
                if (st..st + cfg.window).contains(&t) {
                    column.push(out[[c, t - st]]);
                }
            }
            result[[c, t]] = aggregate(&mut column, cfg.aggregation);
        }
    }
    Ok(result)
}

fn aggregate(values: &mut [f32], how: Aggregation) -> f32 {
    match how {
        Aggregation::Mean => values.iter().map(|&v| v as f64).sum::<f64>() as f32 / values.len() as f32,
        Aggregation::Max => values.iter().copied().fold(f32::NEG_INFINITY, f32::max),
        Aggregation::Median => {
            values.sort_by(f32::total_cmp);
            let n = values.len();
            if n % 2 == 1 {
                values[n / 2]
            } else {
                0.5 * (values[n / 2 - 1] + values[n / 2])
            }
        }
    }
}

/// Detection score per frame: the class-1 posterior for classification
/// tasks, the regression output for SCD.
pub fn frame_scores(task: Task, predictions: &Array2<f32>) -> Vec<f32> {
    let row = if task.is_classification() { 1 } else { 0 };
    predictions.row(row).to_vec()
}

/// Feature extraction, normalization and sliding inference for one recording.
pub fn infer_recording(
    model: &SegmentationModel,
    wave: &MultichannelWaveform,
    options: &ExtractOptions,
    cfg: &SlidingConfig,
) -> Result<Vec<f32>> {
    let features = model.extractor(options.clone()).extract(wave)?.into_values();
    if features.nrows() != model.stats.dim() {
        return Err(Error::DimMismatch {
            expected: model.stats.dim(),
            got: features.nrows(),
        });
    }
    let normalized = model.normalize(&features)?;
    let pred = sliding_inference(&model.net, normalized.view(), cfg)?;
    Ok(frame_scores(model.task, &pred))
}
