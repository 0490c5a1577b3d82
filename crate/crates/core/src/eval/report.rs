use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{average_precision, confidence_interval, detection_metrics, peak_pick, purity_coverage};
use super::tuning::{binarize, tune, ScoredFile, Tuned};
use crate::error::{Error, Result};
use crate::labeling::Task;

/// Per-file metrics with their mean and 95% interval half-width.
/// All values are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub threshold: f64,
    pub min_distance: Option<usize>,
    pub per_file: BTreeMap<String, BTreeMap<String, f64>>,
    pub aggregate: BTreeMap<String, f64>,
    pub ci95: BTreeMap<String, f64>,
}

/// Metric names reported for a task, in column order.
pub fn metric_names(task: Task) -> &'static [&'static str] {
    match task {
        Task::Vad => &["fa", "miss", "error", "precision", "recall", "f1"],
        Task::Osd => &["precision", "recall", "f1", "ap"],
        Task::Scd => &["purity", "coverage", "ser"],
    }
}

/// Metrics of one file under fixed decision parameters. OSD average
/// precision is left out for files without overlap.
pub fn file_metrics(task: Task, file: &ScoredFile<'_>, tuned: &Tuned) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    if task == Task::Scd {
        let points = peak_pick(file.scores, tuned.threshold as f32, tuned.min_distance);
        let s = purity_coverage(&points, file.reference)?;
        out.insert("purity".into(), s.purity);
        out.insert("coverage".into(), s.coverage);
        out.insert("ser".into(), s.ser);
        return Ok(out);
    }
    let reference = file.binary_reference(task);
    let m = detection_metrics(&binarize(file.scores, tuned.threshold), &reference)?;
    if task == Task::Vad {
        out.insert("fa".into(), m.false_alarm);
        out.insert("miss".into(), m.miss);
        out.insert("error".into(), m.false_alarm + m.miss);
    }
    out.insert("precision".into(), 100.0 * m.precision);
    out.insert("recall".into(), 100.0 * m.recall);
    out.insert("f1".into(), 100.0 * m.f1);
    if task == Task::Osd {
        match average_precision(file.scores, &reference) {
            Ok(ap) => {
                out.insert("ap".into(), 100.0 * ap);
            }
            Err(_) => log::warn!("file without overlap: average precision skipped"),
        }
    }
    Ok(out)
}

impl MetricsReport {
    pub fn from_files(task: Task, tuned: &Tuned, files: Vec<(String, BTreeMap<String, f64>)>) -> Self {
        let mut aggregate = BTreeMap::new();
        let mut ci95 = BTreeMap::new();
        for &name in metric_names(task) {
            let values: Vec<f64> = files.iter().filter_map(|(_, m)| m.get(name).copied()).collect();
            if values.is_empty() {
                continue;
            }
            aggregate.insert(name.to_string(), values.iter().sum::<f64>() / values.len() as f64);
            ci95.insert(name.to_string(), confidence_interval(&values));
        }
        Self {
            task,
            threshold: tuned.threshold,
            min_distance: (task == Task::Scd).then_some(tuned.min_distance),
            per_file: files.into_iter().collect(),
            aggregate,
            ci95,
        }
    }

    /// Tab-separated table: one row per file, then `mean` and `ci95` rows.
    pub fn to_tsv(&self) -> String {
        let names = metric_names(self.task);
        let mut out = String::new();
        let _ = writeln!(out, "file\t{}", names.join("\t"));
        let mut row = |label: &str, values: &BTreeMap<String, f64>| {
            let cells: Vec<String> = names
                .iter()
                .map(|n| values.get(*n).map_or("NA".to_string(), |v| format!("{v:.2}")))
                .collect();
            let _ = writeln!(out, "{label}\t{}", cells.join("\t"));
        };
        for (file, values) in &self.per_file {
            row(file, values);
        }
        row("mean", &self.aggregate);
        row("ci95", &self.ci95);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Tunes decision parameters on `dev` and scores every `test` file.
pub fn evaluate_scored(
    task: Task,
    dev: &[ScoredFile<'_>],
    test: &[(String, ScoredFile<'_>)],
    distances: &[usize],
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let tuned = tune(dev, task, distances)?;
    log::info!("tuned {task} threshold {:.2}", tuned.threshold);
    score_files(task, &tuned, test)
}

/// Scores every `test` file with fixed decision parameters.
pub fn score_files(task: Task, tuned: &Tuned, test: &[(String, ScoredFile<'_>)]) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let files = test
        .iter()
        .map(|(name, f)| Ok((name.clone(), file_metrics(task, f, tuned)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::from_files(task, tuned, files))
}
