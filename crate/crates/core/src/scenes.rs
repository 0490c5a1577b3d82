//! Randomized scene families for synthetic corpora, expanded into concrete
//! [`ScenarioSpec`]s so every generated recording can be reproduced.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array_sim::{ArraySpec, ScenarioSpec, SignalKind, SourceSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// One speech-like talker with pauses.
    Activity,
    /// Two talkers at a fixed angular separation taking back-to-back turns.
    Turns,
    /// Two speech-like talkers whose turns sometimes overlap, sometimes leave gaps.
    Overlap,
}

/// A family of random scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub kind: SceneKind,
    pub count: usize,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Recording ids are `<prefix><index>`; defaults to the kind name.
    #[serde(default)]
    pub prefix: Option<String>,
    #[serde(default)]
    pub noise_snr: Option<f64>,
    /// Source signal; white noise for `turns`, speech-like otherwise.
    #[serde(default)]
    pub signal: Option<SignalKind>,
    /// Turn length range in seconds.
    #[serde(default = "default_turn")]
    pub turn: [f64; 2],
    /// Pause length range in seconds.
    #[serde(default = "default_gap")]
    pub gap: [f64; 2],
    /// Overlap length range in seconds (`overlap` scenes).
    #[serde(default = "default_overlap")]
    pub overlap: [f64; 2],
    /// Chance that the next turn overlaps the current one instead of following a pause.
    #[serde(default = "default_overlap_prob")]
    pub overlap_prob: f64,
    /// Talker separation in degrees: exact for `turns`, a minimum for `overlap`.
    #[serde(default = "default_separation")]
    pub separation_deg: f64,
    #[serde(default)]
    pub array: ArraySpec,
}

fn default_duration() -> f64 {
    10.0
}
fn default_turn() -> [f64; 2] {
    [1.0, 3.0]
}
fn default_gap() -> [f64; 2] {
    [0.3, 1.5]
}
fn default_overlap() -> [f64; 2] {
    [0.5, 1.5]
}
fn default_overlap_prob() -> f64 {
    0.5
}
fn default_separation() -> f64 {
    60.0
}

impl GenerateSpec {
    pub fn new(kind: SceneKind, count: usize, seed: u64) -> Self {
        Self {
            kind,
            count,
            duration: default_duration(),
            seed,
            prefix: None,
            noise_snr: None,
            signal: None,
            turn: default_turn(),
            gap: default_gap(),
            overlap: default_overlap(),
            overlap_prob: default_overlap_prob(),
            separation_deg: default_separation(),
            array: ArraySpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: [f64; 2]| r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite();
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Scenario(format!("duration {} must be > 0", self.duration)));
        }
        for (name, r) in [("turn", self.turn), ("gap", self.gap), ("overlap", self.overlap)] {
            if !range_ok(r) {
                return Err(Error::Scenario(format!(
                    "{name} range {r:?} must satisfy 0 < min <= max"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.overlap_prob) {
            return Err(Error::Scenario(format!(
                "overlap_prob {} outside [0, 1]",
                self.overlap_prob
            )));
        }
        if !(0.0..=180.0).contains(&self.separation_deg) {
            return Err(Error::Scenario(format!(
                "separation {} outside [0, 180] degrees",
                self.separation_deg
            )));
        }
        Ok(())
    }

    /// Expands the family into `count` concrete scenarios.
    pub fn scenarios(&self) -> Result<Vec<ScenarioSpec>> {
        self.validate()?;
        let prefix = self.prefix.clone().unwrap_or_else(|| kind_name(self.kind).to_string());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count)
            .map(|i| {
                let sources = match self.kind {
                    SceneKind::Activity => self.activity(&mut rng),
                    SceneKind::Turns => self.turns(&mut rng),
                    SceneKind::Overlap => self.overlapping(&mut rng),
                };
                let spec = ScenarioSpec {
                    recording_id: format!("{prefix}{i:03}"),
                    duration: self.duration,
                    seed: rng.random(),
                    noise_snr: self.noise_snr,
                    sources,
                    array: self.array.clone(),
                };
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }

    fn signal(&self) -> SignalKind {
        self.signal.clone().unwrap_or(match self.kind {
            SceneKind::Turns => SignalKind::WhiteNoise,
            _ => SignalKind::SpeechLike,
        })
    }

    fn source(&self, id: &str, azimuth: f64, intervals: Vec<[f64; 2]>) -> SourceSpec {
        SourceSpec {
            id: id.into(),
            azimuth: azimuth.rem_euclid(TAU),
            signal: self.signal(),
            intervals,
            level_db: 0.0,
        }
    }

    fn activity(&self, rng: &mut ChaCha8Rng) -> Vec<SourceSpec> {
        let mut intervals = Vec::new();
        let mut t = uniform(rng, self.gap);
        while t < self.duration {
            let end = (t + uniform(rng, self.turn)).min(self.duration);
            push_interval(&mut intervals, t, end);
            t = end + uniform(rng, self.gap);
        }
        vec![self.source("spk0", rng.random_range(0.0..TAU), intervals)]
    }

    fn turns(&self, rng: &mut ChaCha8Rng) -> Vec<SourceSpec> {
        let mut intervals = [Vec::new(), Vec::new()];
        let mut who = rng.random_range(0..2usize);
        let mut t = 0.0;
        while t < self.duration {
            let end = (t + uniform(rng, self.turn)).min(self.duration);
            push_interval(&mut intervals[who], t, end);
            t = end;
            who = 1 - who;
        }
        let base = rng.random_range(0.0..TAU);
        let [a, b] = intervals;
        vec![
            self.source("spk0", base, a),
            self.source("spk1", base + self.separation_deg.to_radians(), b),
        ]
    }

    fn overlapping(&self, rng: &mut ChaCha8Rng) -> Vec<SourceSpec> {
        let mut intervals = [Vec::new(), Vec::new()];
        let mut who = rng.random_range(0..2usize);
        let mut start = uniform(rng, self.gap);
        let mut len = uniform(rng, self.turn);
        while start < self.duration {
            let end = start + len;
            push_interval(&mut intervals[who], start, end.min(self.duration));
            let next_len = uniform(rng, self.turn);
            // Capping the overlap below half of either turn keeps each talker's
            // own turns disjoint.
            start = if rng.random_bool(self.overlap_prob) {
                end - uniform(rng, self.overlap).min(0.4 * len.min(next_len))
            } else {
                end + uniform(rng, self.gap)
            };
            len = next_len;
            who = 1 - who;
        }
        let sep = self.separation_deg.to_radians();
        let a = rng.random_range(0.0..TAU);
        let b = a + sep + rng.random_range(0.0..=(TAU - 2.0 * sep).max(0.0));
        let [ia, ib] = intervals;
        vec![self.source("spk0", a, ia), self.source("spk1", b, ib)]
    }
}

fn kind_name(kind: SceneKind) -> &'static str {
    match kind {
        SceneKind::Activity => "activity",
        SceneKind::Turns => "turns",
        SceneKind::Overlap => "overlap",
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Appends `[start, end)` unless it is shorter than one frame.
fn push_interval(intervals: &mut Vec<[f64; 2]>, start: f64, end: f64) {
    if end - start >= 0.01 {
        intervals.push([start, end]);
    }
}

/// Contents of a `simulate` spec file: explicit scenes and random families.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default)]
    pub scenario: Vec<ScenarioSpec>,
    #[serde(default)]
    pub generate: Vec<GenerateSpec>,
}

impl SimulationSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// All scenes in file order, explicit ones first. Recording ids must be unique.
    pub fn scenarios(&self) -> Result<Vec<ScenarioSpec>> {
        let mut out = self.scenario.clone();
        for g in &self.generate {
            out.extend(g.scenarios()?);
        }
        let mut seen = BTreeSet::new();
        for s in &out {
            s.validate()?;
            if !seen.insert(s.recording_id.as_str()) {
                return Err(Error::Scenario(format!("duplicate recording id {}", s.recording_id)));
            }
        }
        Ok(out)
    }
}
