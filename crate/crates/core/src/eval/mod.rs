//! Sliding-window inference, decision tuning and segmentation metrics.

mod inference;
mod metrics;
mod report;
mod tuning;

pub use inference::{covering_windows, frame_scores, infer_recording, sliding_inference, Aggregation, SlidingConfig};
pub use metrics::{
    average_precision, confidence_interval, detection_metrics, peak_pick, purity_coverage, reference_regions,
    segments_from_points, DetectionMetrics, SegmentationScores,
};
pub use report::{evaluate_scored, file_metrics, metric_names, score_files, MetricsReport};
pub use tuning::{binarize, threshold_grid, tune, tune_threshold, ScoredFile, Tuned, DEFAULT_MIN_DISTANCE};
