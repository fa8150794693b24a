//! Paired-scenario simulator with a controllable domain shift.
//!
//! Ground-truth scenes are random rectangles and ellipses over a background
//! class. A [`NoiseModel`] turns a ground truth into a prediction plus
//! probability map, standing in for a segmentation network run on one
//! input domain. The synthetic channel's noise model is the real channel's
//! model moved towards a shifted model by `delta`, so `delta = 0` means
//! both channels behave identically in distribution.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{LabelMask, PairedSample, ProbMap, IGNORE_LABEL};
use crate::seeding::{derive_seed, rng_from, TAG_CORRUPT, TAG_REAL, TAG_SCENE, TAG_SYNTHETIC};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    pub num_classes: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            num_classes: 5,
            min_shapes: 3,
            max_shapes: 8,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes > 255 {
            return Err(Error::InvalidConfig(format!(
                "scene needs 2..=255 classes, got {}",
                self.num_classes
            )));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidConfig(format!(
                "scene dimensions must be at least 16, got {}x{}",
                self.width, self.height
            )));
        }
        if self.min_shapes > self.max_shapes {
            return Err(Error::InvalidConfig("min_shapes exceeds max_shapes".into()));
        }
        Ok(())
    }
}

/// Behaviour of a model on one input domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Softmax temperature of the emitted probabilities; 0 gives one-hot maps.
    pub temperature: f64,
    /// Width in pixels of the band in which class borders move.
    pub boundary_jitter: f64,
    /// Row-stochastic per-pixel relabelling matrix.
    pub confusion: Vec<Vec<f64>>,
    /// Expected number of misclassified discs per image.
    pub blob_rate: f64,
    pub blob_radius_min: f64,
    pub blob_radius_max: f64,
    /// Seed used by [`corrupt`]; dataset generation derives its own.
    pub seed: u64,
}

impl NoiseModel {
    /// A model that reproduces the ground truth with one-hot probabilities.
    pub fn identity(num_classes: usize) -> Self {
        Self {
            temperature: 0.0,
            boundary_jitter: 0.0,
            confusion: uniform_confusion(num_classes, 1.0),
            blob_rate: 0.0,
            blob_radius_min: 0.0,
            blob_radius_max: 0.0,
            seed: 0,
        }
    }

    /// Default model of the real channel.
    pub fn default_base(num_classes: usize) -> Self {
        Self {
            temperature: 0.5,
            boundary_jitter: 1.0,
            confusion: uniform_confusion(num_classes, 0.995),
            blob_rate: 2.0,
            blob_radius_min: 1.5,
            blob_radius_max: 4.0,
            seed: 0,
        }
    }

    /// Default shifted model: softer probabilities, wider border jitter,
    /// larger and more frequent error blobs, and extra confusion towards
    /// class 2 (the last class when fewer than 3 exist).
    pub fn default_shifted(num_classes: usize) -> Self {
        Self {
            temperature: 1.0,
            boundary_jitter: 2.0,
            confusion: sink_confusion(num_classes, 0.985, DEFAULT_SINK_CLASS.min(num_classes - 1), 0.01),
            blob_rate: 4.0,
            blob_radius_min: 2.5,
            blob_radius_max: 6.0,
            seed: 0,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be finite and >= 0, got {}", self.temperature));
        }
        for (name, v) in [
            ("boundary_jitter", self.boundary_jitter),
            ("blob_rate", self.blob_rate),
            ("blob_radius_min", self.blob_radius_min),
            ("blob_radius_max", self.blob_radius_max),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.blob_radius_min > self.blob_radius_max {
            return bad("blob_radius_min exceeds blob_radius_max".into());
        }
        if self.confusion.len() != num_classes {
            return bad(format!(
                "confusion matrix has {} rows, expected {num_classes}",
                self.confusion.len()
            ));
        }
        for (c, row) in self.confusion.iter().enumerate() {
            if row.len() != num_classes || row.iter().any(|&p| p.is_nan() || p < 0.0) {
                return bad(format!("confusion row {c} is malformed"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return bad(format!("confusion row {c} sums to {sum}"));
            }
        }
        Ok(())
    }
}

/// Class that the default shifted model confuses other classes with.
pub const DEFAULT_SINK_CLASS: usize = 2;

/// [`uniform_confusion`] with `extra` mass moved from the diagonal of every
/// other row onto column `sink`.
pub fn sink_confusion(num_classes: usize, stay: f64, sink: usize, extra: f64) -> Vec<Vec<f64>> {
    let mut confusion = uniform_confusion(num_classes, stay);
    for (c, row) in confusion.iter_mut().enumerate() {
        if c != sink {
            row[c] -= extra;
            row[sink] += extra;
        }
    }
    confusion
}

/// Row-stochastic matrix with `stay` on the diagonal and the remainder
/// spread evenly.
pub fn uniform_confusion(num_classes: usize, stay: f64) -> Vec<Vec<f64>> {
    let off = if num_classes > 1 {
        (1.0 - stay) / (num_classes - 1) as f64
    } else {
        0.0
    };
    (0..num_classes)
        .map(|c| {
            (0..num_classes)
                .map(|k| if k == c { stay } else { off })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    pub base: NoiseModel,
    pub shifted: NoiseModel,
    pub delta: f64,
    /// Reuse the real channel's realization for the synthetic channel.
    pub shared_realization: bool,
}

impl ShiftConfig {
    pub fn with_defaults(num_classes: usize, delta: f64) -> Self {
        Self {
            base: NoiseModel::default_base(num_classes),
            shifted: NoiseModel::default_shifted(num_classes),
            delta,
            shared_realization: false,
        }
    }

    /// Noise model of the synthetic channel: `base + delta * (shifted - base)`,
    /// extrapolating past 1 with values clamped back into their domains.
    pub fn synthetic_model(&self) -> NoiseModel {
        if self.delta == 0.0 {
            return self.base.clone();
        }
        let t = self.delta;
        let lerp = |a: f64, b: f64| (a + t * (b - a)).max(0.0);
        let confusion = self
            .base
            .confusion
            .iter()
            .zip(&self.shifted.confusion)
            .map(|(ra, rb)| {
                let row: Vec<f64> = ra.iter().zip(rb).map(|(&a, &b)| lerp(a, b)).collect();
                let sum: f64 = row.iter().sum();
                row.into_iter().map(|p| p / sum).collect()
            })
            .collect();
        let rmin = lerp(self.base.blob_radius_min, self.shifted.blob_radius_min);
        let rmax = lerp(self.base.blob_radius_max, self.shifted.blob_radius_max).max(rmin);
        NoiseModel {
            temperature: lerp(self.base.temperature, self.shifted.temperature),
            boundary_jitter: lerp(self.base.boundary_jitter, self.shifted.boundary_jitter),
            confusion,
            blob_rate: lerp(self.base.blob_rate, self.shifted.blob_rate),
            blob_radius_min: rmin,
            blob_radius_max: rmax,
            seed: self.base.seed,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta must be finite and >= 0, got {}", self.delta)));
        }
        self.base.validate(num_classes)?;
        self.shifted.validate(num_classes)
    }
}

/// Ground-truth scene `index`: background 0 with shapes of classes
/// `1..C` painted in order.
pub fn gen_scene(cfg: &SceneConfig, index: u64) -> Result<LabelMask> {
    cfg.validate()?;
    let mut rng = rng_from(derive_seed(cfg.seed, index, TAG_SCENE));
    let (w, h) = (cfg.width as i64, cfg.height as i64);
    let mut data = vec![0u8; (w * h) as usize];
    let n_shapes = rng.gen_range(cfg.min_shapes..=cfg.max_shapes);
    let max_half = (w.min(h) / 4).max(3);
    for _ in 0..n_shapes {
        let class = rng.gen_range(1..cfg.num_classes) as u8;
        let cx = rng.gen_range(0..w);
        let cy = rng.gen_range(0..h);
        let hx = rng.gen_range(2..=max_half);
        let hy = rng.gen_range(2..=max_half);
        let ellipse = rng.gen_bool(0.5);
        for y in (cy - hy).max(0)..=(cy + hy).min(h - 1) {
            for x in (cx - hx).max(0)..=(cx + hx).min(w - 1) {
                let inside = if ellipse {
                    let (dx, dy) = ((x - cx) as f64 / hx as f64, (y - cy) as f64 / hy as f64);
                    dx * dx + dy * dy <= 1.0
                } else {
                    true
                };
                if inside {
                    data[(y * w + x) as usize] = class;
                }
            }
        }
    }
    LabelMask::new(cfg.width, cfg.height, cfg.num_classes, data)
}

/// What a corruption pass did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorruptionStats {
    pub blobs: usize,
    pub flipped_pixels: usize,
}

/// Chebyshev dilation of a binary raster by `r` (separable max filter).
fn dilate(src: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    if r == 0 {
        return src.to_vec();
    }
    let mut rows = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            rows[y * w + x] = src[y * w + lo..=y * w + hi].iter().any(|&b| b);
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).any(|yy| rows[yy * w + x]);
        }
    }
    out
}

fn jitter_borders(labels: &mut [u8], gt: &[u8], w: usize, h: usize, c: usize, band: f64, rng: &mut ChaCha8Rng) {
    if band <= 0.0 {
        return;
    }
    let mut order: Vec<u8> = (0..c as u8).collect();
    order.shuffle(rng);
    for k in order {
        let radius = (rng.gen::<f64>() * (band + 1.0)).floor() as usize;
        let region: Vec<bool> = gt.iter().map(|&v| v == k).collect();
        if radius == 0 || !region.iter().any(|&b| b) {
            continue;
        }
        for (l, grown) in labels.iter_mut().zip(dilate(&region, w, h, radius)) {
            if grown {
                *l = k;
            }
        }
    }
}

fn paint_blobs(labels: &mut [u8], w: usize, h: usize, c: usize, noise: &NoiseModel, rng: &mut ChaCha8Rng) -> usize {
    if noise.blob_rate <= 0.0 {
        return 0;
    }
    let count = Poisson::new(noise.blob_rate)
        .map(|p| p.sample(rng) as usize)
        .unwrap_or(0);
    for _ in 0..count {
        let cx = rng.gen_range(0..w) as f64;
        let cy = rng.gen_range(0..h) as f64;
        let radius = rng.gen_range(noise.blob_radius_min..=noise.blob_radius_max);
        let under = labels[cy as usize * w + cx as usize] as usize;
        let mut class = rng.gen_range(0..c - 1);
        if class >= under {
            class += 1;
        }
        let r = radius.ceil() as i64;
        for y in (cy as i64 - r).max(0)..=(cy as i64 + r).min(h as i64 - 1) {
            for x in (cx as i64 - r).max(0)..=(cx as i64 + r).min(w as i64 - 1) {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= radius * radius {
                    labels[y as usize * w + x as usize] = class as u8;
                }
            }
        }
    }
    count
}

fn flip_pixels(labels: &mut [u8], confusion: &[Vec<f64>], rng: &mut ChaCha8Rng) -> usize {
    let cumulative: Vec<Vec<f64>> = confusion
        .iter()
        .map(|row| {
            row.iter()
                .scan(0.0, |acc, &p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let mut flipped = 0;
    for l in labels.iter_mut() {
        let row = &confusion[*l as usize];
        if row[*l as usize] >= 1.0 {
            continue;
        }
        let u: f64 = rng.gen();
        let cum = &cumulative[*l as usize];
        let new = cum.iter().position(|&v| u < v).unwrap_or(cum.len() - 1) as u8;
        if new != *l {
            *l = new;
            flipped += 1;
        }
    }
    flipped
}

/// Temperature-softened probabilities whose argmax is `labels`.
///
/// The predicted class gets logit 0; other classes sit between 10% and 100%
/// of a scale below it. The scale halves on label borders and the true class
/// is the close runner-up on mislabelled pixels.
fn soften(labels: &[u8], gt: &[u8], w: usize, h: usize, c: usize, temperature: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mut out = vec![0f32; w * h * c];
    let mut logits = vec![0f64; c];
    for i in 0..w * h {
        let l = labels[i] as usize;
        let px = &mut out[i * c..(i + 1) * c];
        if temperature == 0.0 {
            px[l] = 1.0;
            continue;
        }
        let (x, y) = (i % w, i / w);
        let border = (x > 0 && labels[i - 1] != labels[i])
            || (x + 1 < w && labels[i + 1] != labels[i])
            || (y > 0 && labels[i - w] != labels[i])
            || (y + 1 < h && labels[i + w] != labels[i]);
        let scale = if border { 0.5 } else { 1.0 };
        for (k, z) in logits.iter_mut().enumerate() {
            let u: f64 = rng.gen();
            *z = if k == l { 0.0 } else { -scale * (1.0 - 0.9 * u) };
        }
        let g = gt[i];
        if g != IGNORE_LABEL && g as usize != l {
            let u: f64 = rng.gen();
            logits[g as usize] = -scale * (0.1 + 0.4 * u);
        }
        let norm: f64 = logits.iter().map(|z| (z / temperature).exp()).sum();
        for (p, z) in px.iter_mut().zip(&logits) {
            *p = ((z / temperature).exp() / norm) as f32;
        }
    }
    out
}

/// Corrupts `gt` with an explicit stream seed and reports what happened.
pub fn corrupt_seeded(gt: &LabelMask, noise: &NoiseModel, seed: u64) -> Result<(LabelMask, ProbMap, CorruptionStats)> {
    let c = gt.num_classes();
    if c < 2 {
        return Err(Error::Domain("corruption needs at least 2 classes".into()));
    }
    noise.validate(c)?;
    let (w, h) = (gt.width() as usize, gt.height() as usize);
    let mut rng = rng_from(seed);
    // ignore pixels get a concrete class so the prediction stays valid
    let base: Vec<u8> = gt
        .data()
        .iter()
        .map(|&v| if v == IGNORE_LABEL { 0 } else { v })
        .collect();
    let mut labels = base.clone();
    jitter_borders(&mut labels, &base, w, h, c, noise.boundary_jitter, &mut rng);
    let blobs = paint_blobs(&mut labels, w, h, c, noise, &mut rng);
    let flipped_pixels = flip_pixels(&mut labels, &noise.confusion, &mut rng);
    let probs = soften(&labels, gt.data(), w, h, c, noise.temperature, &mut rng);
    let pred = LabelMask::new(gt.width(), gt.height(), c, labels)?;
    let prob = ProbMap::new(gt.width(), gt.height(), c, probs)?;
    Ok((pred, prob, CorruptionStats { blobs, flipped_pixels }))
}

/// Prediction and probability map for `gt`: border jitter, then error
/// blobs, then per-pixel relabelling, then softened probabilities.
pub fn corrupt(gt: &LabelMask, noise: &NoiseModel, index: u64) -> Result<(LabelMask, ProbMap)> {
    let (pred, prob, _) = corrupt_seeded(gt, noise, derive_seed(noise.seed, index, TAG_CORRUPT))?;
    Ok((pred, prob))
}

/// `n` paired samples sharing ground truth, with independent real and
/// synthetic realizations unless `shared_realization` is set.
pub fn gen_paired_dataset(scene: &SceneConfig, shift: &ShiftConfig, n: usize) -> Result<Vec<PairedSample>> {
    if n == 0 {
        return Err(Error::InvalidConfig("dataset size must be at least 1".into()));
    }
    scene.validate()?;
    shift.validate(scene.num_classes)?;
    let syn_model = shift.synthetic_model();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let idx = i as u64;
            let gt = gen_scene(scene, idx)?;
            let (pred_real, prob_real, _) = corrupt_seeded(&gt, &shift.base, derive_seed(scene.seed, idx, TAG_REAL))?;
            let (pred_syn, prob_syn) = if shift.shared_realization {
                (pred_real.clone(), prob_real.clone())
            } else {
                let (p, q, _) = corrupt_seeded(&gt, &syn_model, derive_seed(scene.seed, idx, TAG_SYNTHETIC))?;
                (p, q)
            };
            Ok(PairedSample {
                sample_id: format!("sample_{i:05}"),
                gt,
                pred_real,
                pred_syn,
                prob_real: Some(prob_real),
                prob_syn: Some(prob_syn),
            })
        })
        .collect()
}
