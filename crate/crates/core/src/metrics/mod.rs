//! Semantic (IoU), instance (AP, AR) and panoptic (PQ) evaluation.
//!
//! Conventions:
//! * GT-void pixels (id 0 or a void-role category) are excluded from semantic
//!   IoU and from the prediction side of PQ segment IoU. Predicted segments
//!   lying more than half on GT-void are not counted as false positives.
//! * AP uses 101-point interpolation. Predictions are ranked by score
//!   (absent = 1.0), then larger area, then lower segment id, then image order.
//!   Each prediction takes the highest-IoU unmatched GT of its image with
//!   IoU >= t (ties to the lower GT id).
//! * AR is the mean over the AP thresholds of recall at that threshold.
//! * AP/AR are undefined (`None`) for a category without GT instances.

mod detection;
mod matching;
mod panoptic;
mod report;
mod semantic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::MaskError;
use crate::panoptic::MapError;

pub use detection::{average_precision, average_recall, interpolated_ap, Detection};
pub use matching::{match_greedy_by_iou, Matching};
pub use panoptic::{panoptic_quality, PanopticQuality, PqStats};
pub use report::{
    evaluate_dataset, evaluate_image, CategoryMetrics, EvaluationReport, ImageEvaluation, OverallMetrics,
};
pub use semantic::{semantic_iou, SemanticIou};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("no image pairs to evaluate")]
    EmptyDataset,
    #[error("invalid metric configuration: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// IoU thresholds averaged by AP and AR.
    pub ap_thresholds: Vec<f64>,
    /// PQ counts a pair as matched when IoU is strictly above this value.
    pub pq_match_threshold: f64,
    pub recall_curve_points: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            ap_thresholds: coco_thresholds(),
            pq_match_threshold: 0.5,
            recall_curve_points: 101,
        }
    }
}

/// 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.ap_thresholds.is_empty() {
            return Err(MetricsError::BadConfig("no AP thresholds".into()));
        }
        if self.ap_thresholds.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(MetricsError::BadConfig("thresholds must lie in (0, 1]".into()));
        }
        if self.ap_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricsError::BadConfig("thresholds must be strictly increasing".into()));
        }
        if self.recall_curve_points < 2 {
            return Err(MetricsError::BadConfig("need at least 2 recall points".into()));
        }
        // The PQ uniqueness argument needs a threshold of at least 0.5.
        if !(0.5..1.0).contains(&self.pq_match_threshold) {
            return Err(MetricsError::BadConfig("pq_match_threshold must be in [0.5, 1)".into()));
        }
        Ok(())
    }
}
