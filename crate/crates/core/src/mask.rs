//! Raster types and pixel-level scoring primitives.
//!
//! Label rasters store one `u8` class id per pixel in row-major order. The
//! value [`IGNORE_LABEL`] marks pixels that take part in no count at all.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved label for pixels excluded from every statistic.
pub const IGNORE_LABEL: u8 = 255;

/// Largest class count representable next to the ignore label.
pub const MAX_CLASSES: usize = 255;

/// Tolerance on per-pixel probability sums.
pub const PROB_SUM_TOLERANCE: f64 = 1e-4;

/// H×W raster of class identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMask {
    width: u32,
    height: u32,
    num_classes: usize,
    data: Vec<u8>,
}

impl LabelMask {
    /// Builds a mask after checking length and value range.
    pub fn new(width: u32, height: u32, num_classes: usize, data: Vec<u8>) -> Result<Self> {
        check_class_count(num_classes)?;
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(Error::Congruence(format!(
                "mask data has {} values, expected {width}x{height} = {expected}",
                data.len()
            )));
        }
        if let Some(pos) = data
            .iter()
            .position(|&v| v != IGNORE_LABEL && v as usize >= num_classes)
        {
            return Err(Error::InvalidClass {
                file: "<memory>".into(),
                x: (pos % width as usize) as u32,
                y: (pos / width as usize) as u32,
                value: data[pos],
            });
        }
        Ok(Self {
            width,
            height,
            num_classes,
            data,
        })
    }

    /// Mask with every pixel set to `value`.
    pub fn filled(width: u32, height: u32, num_classes: usize, value: u8) -> Result<Self> {
        Self::new(
            width,
            height,
            num_classes,
            vec![value; width as usize * height as usize],
        )
    }

    /// Builds a mask from nested rows, handy in tests and small fixtures.
    pub fn from_rows(num_classes: usize, rows: &[&[u8]]) -> Result<Self> {
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, |r| r.len()) as u32;
        if rows.iter().any(|r| r.len() as u32 != width) {
            return Err(Error::Congruence("ragged rows".into()));
        }
        Self::new(width, height, num_classes, rows.concat())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Errors unless `other` has the same width, height and class count.
    pub fn ensure_congruent(&self, other: &LabelMask) -> Result<()> {
        if self.width != other.width
            || self.height != other.height
            || self.num_classes != other.num_classes
        {
            return Err(Error::Congruence(format!(
                "{}x{} (C={}) vs {}x{} (C={})",
                self.width,
                self.height,
                self.num_classes,
                other.width,
                other.height,
                other.num_classes
            )));
        }
        Ok(())
    }

    /// Pixel count per class, ignore pixels excluded.
    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes];
        for &v in &self.data {
            if v != IGNORE_LABEL {
                counts[v as usize] += 1;
            }
        }
        counts
    }
}

fn check_class_count(num_classes: usize) -> Result<()> {
    if num_classes == 0 || num_classes > MAX_CLASSES {
        return Err(Error::Domain(format!(
            "class count {num_classes} outside 1..={MAX_CLASSES}"
        )));
    }
    Ok(())
}

/// H×W×C per-pixel class probabilities, stored class-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbMap {
    width: u32,
    height: u32,
    num_classes: usize,
    data: Vec<f32>,
}

impl ProbMap {
    /// Builds a probability map, validating ranges and per-pixel sums.
    pub fn new(width: u32, height: u32, num_classes: usize, data: Vec<f32>) -> Result<Self> {
        check_class_count(num_classes)?;
        let expected = width as usize * height as usize * num_classes;
        if data.len() != expected {
            return Err(Error::Congruence(format!(
                "probability data has {} values, expected {expected}",
                data.len()
            )));
        }
        let map = Self {
            width,
            height,
            num_classes,
            data,
        };
        map.validate()?;
        Ok(map)
    }

    fn validate(&self) -> Result<()> {
        for (i, px) in self.data.chunks_exact(self.num_classes).enumerate() {
            let (x, y) = (i % self.width as usize, i / self.width as usize);
            if px.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidProbabilities {
                    file: "<memory>".into(),
                    detail: format!("entry outside [0, 1] at pixel (x={x}, y={y})"),
                });
            }
            let sum: f64 = px.iter().map(|&p| f64::from(p)).sum();
            if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(Error::InvalidProbabilities {
                    file: "<memory>".into(),
                    detail: format!("pixel (x={x}, y={y}) sums to {sum}"),
                });
            }
        }
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Probability vector of the pixel at flat index `idx`.
    #[inline]
    pub fn pixel(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.num_classes..(idx + 1) * self.num_classes]
    }

    pub fn ensure_congruent(&self, mask: &LabelMask) -> Result<()> {
        if self.width != mask.width
            || self.height != mask.height
            || self.num_classes != mask.num_classes
        {
            return Err(Error::Congruence(format!(
                "probability map {}x{}x{} vs mask {}x{} (C={})",
                self.width, self.height, self.num_classes, mask.width, mask.height, mask.num_classes
            )));
        }
        Ok(())
    }
}

/// Shared ground truth plus the model's prediction on the real and the
/// synthetic input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub sample_id: String,
    pub gt: LabelMask,
    pub pred_real: LabelMask,
    pub pred_syn: LabelMask,
    pub prob_real: Option<ProbMap>,
    pub prob_syn: Option<ProbMap>,
}

impl PairedSample {
    /// Checks congruence of all rasters and argmax consistency of any
    /// probability maps.
    pub fn validate(&self) -> Result<()> {
        self.gt.ensure_congruent(&self.pred_real)?;
        self.gt.ensure_congruent(&self.pred_syn)?;
        for (prob, pred) in [
            (&self.prob_real, &self.pred_real),
            (&self.prob_syn, &self.pred_syn),
        ] {
            if let Some(prob) = prob {
                prob.ensure_congruent(pred)?;
                if let Some(idx) = first_argmax_mismatch(prob, pred) {
                    return Err(Error::ArgmaxMismatch {
                        file: self.sample_id.clone(),
                        x: (idx % pred.width as usize) as u32,
                        y: (idx / pred.width as usize) as u32,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn has_probabilities(&self) -> bool {
        self.prob_real.is_some() && self.prob_syn.is_some()
    }

    pub fn num_classes(&self) -> usize {
        self.gt.num_classes
    }
}

/// Flat index of the first pixel whose argmax differs from `pred`.
pub(crate) fn first_argmax_mismatch(prob: &ProbMap, pred: &LabelMask) -> Option<usize> {
    (0..pred.len()).find(|&i| {
        let label = pred.data[i];
        label == IGNORE_LABEL || argmax(prob.pixel(i)) != label as usize
    })
}

/// C×C confusion counts; entry (c, k) counts pixels with ground truth c
/// predicted as k.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
    /// Per ground-truth class, pixels predicted as the ignore label.
    pred_ignored: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
            pred_ignored: vec![0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn row(&self, gt: usize) -> &[u64] {
        &self.counts[gt * self.num_classes..(gt + 1) * self.num_classes]
    }

    pub fn pred_ignored(&self, gt: usize) -> u64 {
        self.pred_ignored[gt]
    }

    /// |Y_c|: pixels of ground-truth class `c`, including those predicted
    /// as the ignore label.
    pub fn gt_total(&self, c: usize) -> u64 {
        self.row(c).iter().sum::<u64>() + self.pred_ignored[c]
    }

    /// Pixels predicted as `k` over non-ignore ground truth.
    pub fn pred_total(&self, k: usize) -> u64 {
        (0..self.num_classes).map(|c| self.get(c, k)).sum()
    }

    /// Intersection-over-union of class `c`, absent on an empty union.
    pub fn iou(&self, c: usize) -> Option<f64> {
        let inter = self.get(c, c);
        let union = self.gt_total(c) + self.pred_total(c) - inter;
        (union > 0).then(|| inter as f64 / union as f64)
    }

    /// Mean IoU over classes with a defined score.
    pub fn miou(&self) -> Option<f64> {
        mean_defined((0..self.num_classes).map(|c| self.iou(c)))
    }

    /// Element-wise sum, used to pool counts over a dataset.
    pub fn accumulate(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.pred_ignored.iter_mut().zip(&other.pred_ignored) {
            *a += b;
        }
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Confusion counts of `pred` against `gt`. Ignore pixels in `gt` count
/// nowhere.
pub fn confusion(pred: &LabelMask, gt: &LabelMask) -> Result<ConfusionMatrix> {
    pred.ensure_congruent(gt)?;
    let c = gt.num_classes;
    let mut m = ConfusionMatrix::zeros(c);
    for (&g, &p) in gt.data.iter().zip(&pred.data) {
        if g == IGNORE_LABEL {
            continue;
        }
        if p == IGNORE_LABEL {
            m.pred_ignored[g as usize] += 1;
        } else {
            m.counts[g as usize * c + p as usize] += 1;
        }
    }
    Ok(m)
}

fn check_class(c: usize, num_classes: usize) -> Result<()> {
    if c >= num_classes {
        return Err(Error::Domain(format!(
            "class {c} outside 0..{num_classes}"
        )));
    }
    Ok(())
}

/// IoU of class `c` over non-ignore pixels; `None` when the class is
/// absent from both masks.
pub fn iou_class(pred: &LabelMask, gt: &LabelMask, c: usize) -> Result<Option<f64>> {
    pred.ensure_congruent(gt)?;
    check_class(c, gt.num_classes)?;
    let c = c as u8;
    let (mut inter, mut union) = (0u64, 0u64);
    for (&g, &p) in gt.data.iter().zip(&pred.data) {
        if g == IGNORE_LABEL {
            continue;
        }
        let (in_gt, in_pred) = (g == c, p == c);
        inter += u64::from(in_gt && in_pred);
        union += u64::from(in_gt || in_pred);
    }
    Ok((union > 0).then(|| inter as f64 / union as f64))
}

/// Per-image mean IoU over the classes with a defined IoU.
pub fn miou_image(pred: &LabelMask, gt: &LabelMask) -> Result<f64> {
    confusion(pred, gt)?
        .miou()
        .ok_or_else(|| Error::UndefinedScore("no class has a defined IoU".into()))
}

/// Index of the largest entry; ties go to the lowest index.
#[inline]
pub fn argmax(p: &[f32]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = k;
        }
    }
    best
}

/// Per-pixel class of maximal probability.
pub fn argmax_mask(prob: &ProbMap) -> LabelMask {
    let data = prob
        .data
        .chunks_exact(prob.num_classes)
        .map(|px| argmax(px) as u8)
        .collect();
    LabelMask {
        width: prob.width,
        height: prob.height,
        num_classes: prob.num_classes,
        data,
    }
}
