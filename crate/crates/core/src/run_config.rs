//! TOML configuration for training and evaluation runs.
//!
//! ```toml
//! task = "scd"                 # optional; must agree with --task
//! features = "mfcc+ch_doa"
//!
//! [data]
//! train = "corpus/train"       # relative to this file
//! dev = "corpus/dev"           # optional
//! test = "corpus/test"         # optional
//!
//! [output]
//! model = "out/scd.segm"
//! log = "out/scd.log.json"     # optional, defaults next to the model
//!
//! [array]
//! mics = 8
//! radius = 0.1
//! speed_of_sound = 343.0
//! ipd_pairs = [[0, 4], [1, 5], [2, 6], [3, 7]]  # optional
//!
//! [train]                      # see TrainConfig; all keys optional
//! epochs = 20
//! batch_size = 64
//! learning_rate = 0.001
//! seed = 0
//!
//! [inference]
//! window = 200
//! hop = 50
//! aggregation = "mean"         # mean | median | max
//!
//! [tuning]
//! min_distances = [5, 10, 15, 20, 30, 40, 50]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::array_sim::{ArrayGeometry, DEFAULT_MICS, DEFAULT_RADIUS, SPEED_OF_SOUND};
use crate::dsp::N_BINS;
use crate::error::{Error, Result};
use crate::eval::{SlidingConfig, DEFAULT_MIN_DISTANCE};
use crate::features::spatial::opposed_pairs;
use crate::features::{ExtractOptions, FeatureKind, FeatureRecipe};
use crate::labeling::Task;
use crate::nn::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train: PathBuf,
    #[serde(default)]
    pub dev: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub model: PathBuf,
    #[serde(default)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub mics: usize,
    pub radius: f64,
    pub speed_of_sound: f64,
    /// Defaults to diametrically opposed pairs.
    pub ipd_pairs: Option<Vec<(usize, usize)>>,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            mics: DEFAULT_MICS,
            radius: DEFAULT_RADIUS,
            speed_of_sound: SPEED_OF_SOUND,
            ipd_pairs: None,
        }
    }
}

impl ArrayConfig {
    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::uniform(self.mics, self.radius)?.with_speed_of_sound(self.speed_of_sound)
    }

    pub fn ipd_pairs(&self) -> Vec<(usize, usize)> {
        self.ipd_pairs.clone().unwrap_or_else(|| opposed_pairs(self.mics))
    }

    pub fn extract_options(&self) -> ExtractOptions {
        ExtractOptions {
            ipd_pairs: self.ipd_pairs(),
            ..ExtractOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    /// Candidate SCD peak distances in frames.
    pub min_distances: Vec<usize>,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            min_distances: vec![5, 10, 15, DEFAULT_MIN_DISTANCE, 30, 40, 50],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub task: Option<Task>,
    pub features: FeatureRecipe,
    pub data: DataPaths,
    pub output: OutputPaths,
    #[serde(default)]
    pub array: ArrayConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub inference: SlidingConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
}

impl RunConfig {
    /// Parses `text`, resolving relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data.train);
        cfg.data.dev.iter_mut().for_each(resolve);
        cfg.data.test.iter_mut().for_each(resolve);
        resolve(&mut cfg.output.model);
        cfg.output.log.iter_mut().for_each(resolve);
        Ok(cfg)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::from_toml(&text, base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that input directories exist and that the feature layout is
    /// consistent with the array.
    pub fn validate(&self) -> Result<()> {
        let inputs = std::iter::once(&self.data.train)
            .chain(self.data.dev.iter())
            .chain(self.data.test.iter());
        for dir in inputs {
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "data directory {} does not exist",
                    dir.display()
                )));
            }
        }
        self.array.geometry()?;
        let parts = self.features.parts();
        if parts.iter().any(|k| matches!(k, FeatureKind::Ipd | FeatureKind::Csipd)) {
            let pairs = self.array.ipd_pairs();
            if pairs.is_empty() {
                return Err(Error::Config("IPD features need at least one microphone pair".into()));
            }
            if let Some(&(a, b)) = pairs
                .iter()
                .find(|&&(a, b)| a >= self.array.mics || b >= self.array.mics || a == b)
            {
                return Err(Error::Config(format!(
                    "IPD pair ({a}, {b}) is invalid for {} microphones",
                    self.array.mics
                )));
            }
        }
        if self.tuning.min_distances.is_empty() {
            return Err(Error::Config("tuning.min_distances must not be empty".into()));
        }
        if self.inference.window == 0 || self.inference.hop == 0 {
            return Err(Error::Config("inference window and hop must be positive".into()));
        }
        Ok(())
    }

    /// The task, checking agreement with a command-line choice.
    pub fn resolve_task(&self, requested: Task) -> Result<Task> {
        match self.task {
            Some(t) if t != requested => Err(Error::Config(format!(
                "config is for task {t} but {requested} was requested"
            ))),
            _ => Ok(requested),
        }
    }

    pub fn log_path(&self) -> PathBuf {
        self.output
            .log
            .clone()
            .unwrap_or_else(|| self.output.model.with_extension("log.json"))
    }

    /// Input dimension of the model, without extracting anything.
    pub fn feature_dim(&self) -> usize {
        self.features
            .parts()
            .iter()
            .map(|k| match k {
                FeatureKind::Ipd => self.array.ipd_pairs().len() * N_BINS,
                FeatureKind::Csipd => 2 * self.array.ipd_pairs().len() * N_BINS,
                _ => k.dim().unwrap_or(0),
            })
            .sum()
    }
}
