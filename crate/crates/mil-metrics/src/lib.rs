//! Evaluation machinery for bag- and instance-level binary detection:
//! ROC curves with Mann-Whitney-consistent AUC, one-sided DeLong comparison
//! of paired classifiers, operating-point selection, hemorrhage-sequence
//! detection f1, and pixel-level f1 against ground-truth masks.
//!
//! All operations are pure and reentrant; aggregation across bags is
//! associative.

mod delong;
mod detection;
mod error;
mod normal;
mod pixel;
mod roc;
mod sequences;
mod threshold;

pub use delong::{delong_one_sided, DelongComparison};
pub use detection::{aggregate_reports, sequence_detection_report, DetectionReport};
pub use error::{MetricsError, Result};
pub use normal::{normal_cdf, normal_sf};
pub use pixel::pixel_f1;
pub use roc::{roc_auc, RocCurve};
pub use sequences::{extract_sequences, SequenceSet};
pub use threshold::{choose_threshold, ThresholdChoice, ThresholdCriterion};
