//! Error-distribution analysis.
//!
//! For a ground-truth class `c`, every image contributes the fraction of its
//! class-`c` pixels that the model labels `c` (true positives) and the
//! fractions it labels each other class `k` (false negatives towards `k`).
//! The fractions sum to one per image. Averaging them over a dataset gives a
//! per-class profile that can be compared between real and synthetic data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{confusion, ConfusionMatrix, LabelMask};

/// Normalized true-positive and false-negative fractions of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerImageErrorRow {
    pub sample_id: String,
    pub class: usize,
    pub tp: f64,
    /// False-negative fraction per predicted class `k != class`.
    pub fns: BTreeMap<usize, f64>,
    /// Fraction of the class region predicted as the ignore label.
    pub invalid: f64,
}

/// Dataset means of [`PerImageErrorRow`]s for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassErrorProfile {
    pub class: usize,
    pub tps: f64,
    pub fns: BTreeMap<usize, f64>,
    pub invalid: f64,
    pub contributing_images: usize,
}

/// Tukey five-number summary plus outliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// One dataset's polyline on a radar chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarSeries {
    pub dataset: String,
    /// Value on each axis, axis index = class index.
    pub values: Vec<f64>,
    pub invalid: f64,
    pub contributing_images: usize,
}

impl RadarSeries {
    /// Rebuilds the profile this series was emitted from.
    pub fn to_profile(&self, class: usize) -> ClassErrorProfile {
        ClassErrorProfile {
            class,
            tps: self.values[class],
            fns: self
                .values
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != class)
                .map(|(k, &v)| (k, v))
                .collect(),
            invalid: self.invalid,
            contributing_images: self.contributing_images,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarChart {
    pub class: usize,
    pub axes: Vec<usize>,
    pub series: Vec<RadarSeries>,
}

fn check_class(c: usize, num_classes: usize) -> Result<()> {
    if c >= num_classes {
        return Err(Error::Domain(format!("class {c} outside 0..{num_classes}")));
    }
    Ok(())
}

/// Row for class `c` from precomputed confusion counts.
pub fn errors_from_confusion(
    sample_id: &str,
    cm: &ConfusionMatrix,
    c: usize,
) -> Result<Option<PerImageErrorRow>> {
    check_class(c, cm.num_classes())?;
    let total = cm.gt_total(c);
    if total == 0 {
        return Ok(None);
    }
    let denom = total as f64;
    let row = cm.row(c);
    Ok(Some(PerImageErrorRow {
        sample_id: sample_id.to_owned(),
        class: c,
        tp: row[c] as f64 / denom,
        fns: row
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != c)
            .map(|(k, &n)| (k, n as f64 / denom))
            .collect(),
        invalid: cm.pred_ignored(c) as f64 / denom,
    }))
}

/// Error fractions of class `c` in one image; `None` when the class is
/// absent from the ground truth.
pub fn per_image_errors(
    sample_id: &str,
    pred: &LabelMask,
    gt: &LabelMask,
    c: usize,
) -> Result<Option<PerImageErrorRow>> {
    check_class(c, gt.num_classes())?;
    errors_from_confusion(sample_id, &confusion(pred, gt)?, c)
}

/// Pairwise (cascade) summation; keeps the mean independent of how rows
/// were batched.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1..=8 => values.iter().sum(),
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

fn mean_of(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Averages per-image rows of class `c` into a dataset profile.
pub fn aggregate_profile(rows: &[PerImageErrorRow], c: usize) -> Result<ClassErrorProfile> {
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!("no image contains class {c}")));
    }
    if let Some(bad) = rows.iter().find(|r| r.class != c) {
        return Err(Error::Congruence(format!(
            "row for class {} in a class-{c} aggregate",
            bad.class
        )));
    }
    let tp: Vec<f64> = rows.iter().map(|r| r.tp).collect();
    let invalid: Vec<f64> = rows.iter().map(|r| r.invalid).collect();
    let fns = rows[0]
        .fns
        .keys()
        .map(|&k| {
            let vals: Vec<f64> = rows
                .iter()
                .map(|r| r.fns.get(&k).copied().unwrap_or(0.0))
                .collect();
            (k, mean_of(&vals))
        })
        .collect();
    Ok(ClassErrorProfile {
        class: c,
        tps: mean_of(&tp),
        fns,
        invalid: mean_of(&invalid),
        contributing_images: rows.len(),
    })
}

/// Lays out profiles of one class, one polyline per dataset, axes ordered
/// by class index.
pub fn radar_data(profiles: &BTreeMap<String, ClassErrorProfile>) -> Result<RadarChart> {
    let Some(first) = profiles.values().next() else {
        return Err(Error::InsufficientData("no profiles".into()));
    };
    let class = first.class;
    let num_axes = first.fns.len() + 1;
    let series = profiles
        .iter()
        .map(|(name, p)| {
            if p.class != class || p.fns.len() + 1 != num_axes {
                return Err(Error::Congruence(format!(
                    "profile `{name}` is for class {} with {} axes, expected class {class} with {num_axes}",
                    p.class,
                    p.fns.len() + 1
                )));
            }
            let values = (0..num_axes)
                .map(|k| {
                    if k == class {
                        Ok(p.tps)
                    } else {
                        p.fns.get(&k).copied().ok_or_else(|| {
                            Error::Congruence(format!("profile `{name}` lacks axis {k}"))
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RadarSeries {
                dataset: name.clone(),
                values,
                invalid: p.invalid,
                contributing_images: p.contributing_images,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RadarChart {
        class,
        axes: (0..num_axes).collect(),
        series,
    })
}

/// Linear-interpolation quantile (type 7) of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Tukey boxplot statistics with whiskers at 1.5 IQR.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats> {
    if values.is_empty() {
        return Err(Error::InsufficientData("boxplot of no values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("boxplot input must be finite".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || sorted.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v));
    Ok(BoxplotStats {
        min: sorted[0],
        q1,
        median,
        q3,
        max: sorted[sorted.len() - 1],
        whisker_low: inside().next().unwrap_or(q1),
        whisker_high: inside().next_back().unwrap_or(q3),
        outliers: sorted
            .iter()
            .copied()
            .filter(|v| !(lo_fence..=hi_fence).contains(v))
            .collect(),
    })
}
