//! Detection evaluation and set-prediction loss toolkit.
//!
//! - [`geometry`]: normalized boxes, IoU and GIoU.
//! - [`matching`]: Hungarian assignment over focal + L1 + GIoU matching costs.
//! - [`losses`]: focal, L1, GIoU and the combined training loss (verbatim and
//!   corrected forms).
//! - [`metrics`]: COCO-style AP, mAP@50, mAP@50-95, max-F1 precision/recall
//!   and a confusion matrix with a background class.
//! - [`dataset`]: YOLO label and prediction files.
//! - [`bench`]: latency harness and efficiency comparison.
//! - [`report`]: JSON, CSV and markdown rendering.

pub mod bench;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod matching;
pub mod metrics;
pub mod report;

pub use dataset::{ClassList, DatasetSplit};
pub use error::{Error, Result};
pub use geometry::{giou, iou, BBox, CornerBox};
pub use losses::{LossMode, LossWeights, MatchedPair};
pub use matching::{hungarian, Assignment, CostMatrix};
pub use metrics::{Detection, EvalOptions, EvalReport, GroundTruth, Interpolation};
