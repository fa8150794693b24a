//! Measures of how well semantic-segmentation test results transfer from
//! synthetic to real data.
//!
//! * [`paircorr`] correlates per-image scores of paired real/synthetic
//!   predictions.
//! * [`errordist`] compares per-class true-positive and false-negative
//!   distributions.
//! * [`segmeta`] and [`rulekit`] learn interpretable rules that tell real
//!   from synthetic predictions apart, segment by segment.
//! * [`shiftsim`] generates paired data with a controllable domain shift.

pub mod config;
pub mod error;
pub mod errordist;
pub mod io;
pub mod mask;
pub mod paircorr;
pub mod render;
pub mod report;
pub mod rulekit;
pub mod seeding;
pub mod segmeta;
pub mod shiftsim;

pub use error::{Error, Result};
pub use mask::{
    argmax_mask, confusion, iou_class, miou_image, ConfusionMatrix, LabelMask, PairedSample,
    ProbMap, IGNORE_LABEL,
};
pub use segmeta::{Domain, SegmentRecord, FEATURE_NAMES, NUM_FEATURES};
