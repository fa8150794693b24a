//! Segment-level features of predicted masks.
//!
//! A segment is a maximal 8-connected region of one predicted class. For
//! each segment we aggregate pixel-wise dispersion measures (entropy,
//! probability margin, variation ratio) and the predicted-class
//! probability over the whole segment, its boundary and its inner part,
//! and add size and fractality measures: 35 scalars in total. The segment's
//! adjusted IoU against the ground truth marks segments with IoU 0 as
//! errors.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{LabelMask, PairedSample, ProbMap, IGNORE_LABEL};

pub const NUM_FEATURES: usize = 35;

/// Version tag of [`FEATURE_NAMES`]; bump when the order changes.
pub const REGISTRY_VERSION: &str = "segfeat-v1";

/// Feature names in vector order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "entropy_mean",
    "entropy_var",
    "entropy_bd_mean",
    "entropy_bd_var",
    "entropy_in_mean",
    "entropy_in_var",
    "margin_mean",
    "margin_var",
    "margin_bd_mean",
    "margin_bd_var",
    "margin_in_mean",
    "margin_in_var",
    "variation_ratio_mean",
    "variation_ratio_var",
    "variation_ratio_bd_mean",
    "variation_ratio_bd_var",
    "variation_ratio_in_mean",
    "variation_ratio_in_var",
    "prob_mean",
    "prob_var",
    "prob_bd_mean",
    "prob_bd_var",
    "prob_in_mean",
    "prob_in_var",
    "size",
    "size_in",
    "size_bd",
    "size_rel",
    "size_in_rel",
    "entropy_rel",
    "entropy_in_rel",
    "margin_rel",
    "margin_in_rel",
    "variation_ratio_rel",
    "variation_ratio_in_rel",
];

/// Ordered, versioned list of segment features with their definitions.
#[derive(Debug, Clone, Copy)]
pub struct FeatureRegistry;

impl FeatureRegistry {
    pub fn version(&self) -> &'static str {
        REGISTRY_VERSION
    }

    pub fn names(&self) -> &'static [&'static str; NUM_FEATURES] {
        &FEATURE_NAMES
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::Registry(name.to_owned()))
    }

    /// Human-readable definition of a feature.
    pub fn definition(&self, name: &str) -> Result<String> {
        let idx = self.index_of(name)?;
        let region = |suffix: &str| match suffix {
            "bd" => "boundary pixels",
            "in" => "inner pixels",
            _ => "all segment pixels",
        };
        Ok(match idx {
            0..=23 => {
                let measure = match idx / 6 {
                    0 => "normalized entropy",
                    1 => "probability margin",
                    2 => "variation ratio",
                    _ => "predicted-class probability",
                };
                let stat = if idx % 2 == 0 { "mean" } else { "variance" };
                let part = match (idx % 6) / 2 {
                    1 => region("bd"),
                    2 => region("in"),
                    _ => region(""),
                };
                format!("{stat} of the pixel-wise {measure} over {part}")
            }
            24 => "number of segment pixels".into(),
            25 => "number of inner pixels".into(),
            26 => "number of boundary pixels".into(),
            27 => "segment size over boundary size".into(),
            28 => "inner size over boundary size".into(),
            _ => {
                let measure = ["entropy", "margin", "variation ratio"][(idx - 29) / 2];
                if idx % 2 == 1 {
                    format!("mean {measure} times segment size over boundary size")
                } else {
                    format!("mean inner {measure} times inner size over boundary size")
                }
            }
        })
    }
}

/// Which input domain produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Real,
    Synthetic,
}

impl Domain {
    pub fn other(self) -> Domain {
        match self {
            Domain::Real => Domain::Synthetic,
            Domain::Synthetic => Domain::Real,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Real => "real",
            Domain::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Domain::Real),
            "synthetic" => Ok(Domain::Synthetic),
            other => Err(Error::Domain(format!("unknown domain `{other}`"))),
        }
    }
}

/// A connected component of one predicted class. Pixels are flat
/// row-major indices in raster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub index: usize,
    pub class: u8,
    pub pixels: Vec<u32>,
    pub boundary: Vec<u32>,
    pub inner: Vec<u32>,
}

impl Segment {
    pub fn size(&self) -> usize {
        self.pixels.len()
    }
}

/// Disjoint-set forest with path halving and union by size.
struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new() -> Self {
        Self {
            parent: Vec::new(),
            size: Vec::new(),
        }
    }

    fn make_set(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.size.push(1);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

/// Component label per pixel.
#[derive(Debug, Clone)]
pub struct ComponentLabels {
    /// Component id per pixel; `u32::MAX` on ignore pixels.
    pub labels: Vec<u32>,
    /// Pixel count per component.
    pub sizes: Vec<u64>,
    /// Class of each component.
    pub classes: Vec<u8>,
}

pub const NO_COMPONENT: u32 = u32::MAX;

/// Two-pass 8-connected labelling; component ids follow the raster order
/// of each component's first pixel.
pub fn label_components(mask: &LabelMask) -> ComponentLabels {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let data = mask.data();
    let mut provisional = vec![NO_COMPONENT; w * h];
    let mut uf = UnionFind::new();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = data[i];
            if v == IGNORE_LABEL {
                continue;
            }
            let mut current = NO_COMPONENT;
            // already-visited 8-neighbours: W, NW, N, NE
            let mut neighbours = [None; 4];
            if x > 0 {
                neighbours[0] = Some(i - 1);
            }
            if y > 0 {
                if x > 0 {
                    neighbours[1] = Some(i - w - 1);
                }
                neighbours[2] = Some(i - w);
                if x + 1 < w {
                    neighbours[3] = Some(i - w + 1);
                }
            }
            for j in neighbours.into_iter().flatten() {
                if data[j] != v {
                    continue;
                }
                let l = provisional[j];
                if current == NO_COMPONENT {
                    current = l;
                } else if current != l {
                    uf.union(current, l);
                }
            }
            provisional[i] = if current == NO_COMPONENT {
                uf.make_set()
            } else {
                current
            };
        }
    }

    let mut remap = vec![NO_COMPONENT; uf.parent.len()];
    let mut sizes = Vec::new();
    let mut classes = Vec::new();
    let mut labels = vec![NO_COMPONENT; w * h];
    for i in 0..w * h {
        let p = provisional[i];
        if p == NO_COMPONENT {
            continue;
        }
        let root = uf.find(p) as usize;
        if remap[root] == NO_COMPONENT {
            remap[root] = sizes.len() as u32;
            sizes.push(0);
            classes.push(data[i]);
        }
        let id = remap[root];
        labels[i] = id;
        sizes[id as usize] += 1;
    }
    ComponentLabels {
        labels,
        sizes,
        classes,
    }
}

/// Maximal 8-connected same-class regions of `pred`; ignore pixels form no
/// segment. Boundary and inner lists are left empty.
pub fn connected_components(pred: &LabelMask) -> Vec<Segment> {
    let comps = label_components(pred);
    let mut segments: Vec<Segment> = comps
        .sizes
        .iter()
        .zip(&comps.classes)
        .enumerate()
        .map(|(index, (&size, &class))| Segment {
            index,
            class,
            pixels: Vec::with_capacity(size as usize),
            boundary: Vec::new(),
            inner: Vec::new(),
        })
        .collect();
    for (i, &l) in comps.labels.iter().enumerate() {
        if l != NO_COMPONENT {
            segments[l as usize].pixels.push(i as u32);
        }
    }
    segments
}

/// Splits a segment into boundary pixels (a 4-neighbour outside the
/// segment or the image) and inner pixels.
pub fn split_boundary_inner(mut seg: Segment, mask: &LabelMask) -> Segment {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut member = vec![false; w * h];
    for &p in &seg.pixels {
        member[p as usize] = true;
    }
    let (mut boundary, mut inner) = (Vec::new(), Vec::new());
    for &p in &seg.pixels {
        let (x, y) = (p as usize % w, p as usize / w);
        let i = p as usize;
        let interior = x > 0
            && x + 1 < w
            && y > 0
            && y + 1 < h
            && member[i - 1]
            && member[i + 1]
            && member[i - w]
            && member[i + w];
        if interior {
            inner.push(p);
        } else {
            boundary.push(p);
        }
    }
    seg.boundary = boundary;
    seg.inner = inner;
    seg
}

/// Components with boundary and inner parts filled in.
pub fn segments_of(pred: &LabelMask) -> Vec<Segment> {
    let comps = label_components(pred);
    let (w, h) = (pred.width() as usize, pred.height() as usize);
    let mut segments: Vec<Segment> = comps
        .sizes
        .iter()
        .zip(&comps.classes)
        .enumerate()
        .map(|(index, (&size, &class))| Segment {
            index,
            class,
            pixels: Vec::with_capacity(size as usize),
            boundary: Vec::new(),
            inner: Vec::new(),
        })
        .collect();
    // pixels of a component share its label, so the 4-neighbour test can use
    // the label raster directly instead of a per-segment membership mask
    let labels = &comps.labels;
    for i in 0..w * h {
        let l = labels[i];
        if l == NO_COMPONENT {
            continue;
        }
        let (x, y) = (i % w, i / w);
        let interior = x > 0
            && x + 1 < w
            && y > 0
            && y + 1 < h
            && labels[i - 1] == l
            && labels[i + 1] == l
            && labels[i - w] == l
            && labels[i + w] == l;
        let seg = &mut segments[l as usize];
        seg.pixels.push(i as u32);
        if interior {
            seg.inner.push(i as u32);
        } else {
            seg.boundary.push(i as u32);
        }
    }
    segments
}

/// Normalized entropy, probability margin and variation ratio of one
/// probability vector, each in [0, 1].
pub fn pixel_dispersions<T: Copy + Into<f64>>(p: &[T]) -> Result<(f64, f64, f64)> {
    let c = p.len();
    if c < 2 {
        return Err(Error::Domain(format!(
            "dispersion needs at least 2 classes, got {c}"
        )));
    }
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut ent = 0.0;
    for &v in p {
        let v: f64 = v.into();
        if v > 0.0 {
            ent -= v * v.ln();
        }
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    let entropy = (ent / (c as f64).ln()).clamp(0.0, 1.0);
    let margin = (1.0 - (first - second)).clamp(0.0, 1.0);
    let variation_ratio = (1.0 - first).clamp(0.0, 1.0);
    Ok((entropy, margin, variation_ratio))
}

/// Running mean and population variance.
#[derive(Default, Clone, Copy)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.mean
        }
    }

    fn var(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0)
        }
    }
}

/// The 35 registry features of a segment whose boundary/inner split is
/// filled in.
pub fn segment_features(seg: &Segment, prob: &ProbMap) -> Result<Vec<f64>> {
    if seg.boundary.len() + seg.inner.len() != seg.pixels.len() || seg.boundary.is_empty() {
        return Err(Error::Domain(format!(
            "segment {} has no boundary/inner split",
            seg.index
        )));
    }
    let c = seg.class as usize;
    if c >= prob.num_classes() {
        return Err(Error::Congruence(format!(
            "segment class {c} outside probability map with {} classes",
            prob.num_classes()
        )));
    }
    let npix = prob.width() as usize * prob.height() as usize;
    // [entropy, margin, variation ratio, class probability] x [whole, boundary, inner]
    let mut moments = [[Moments::default(); 3]; 4];
    for (region, pixels) in [(1, &seg.boundary), (2, &seg.inner)] {
        for &p in pixels.iter() {
            if p as usize >= npix {
                return Err(Error::Congruence("segment pixel outside probability map".into()));
            }
            let px = prob.pixel(p as usize);
            let (e, m, v) = pixel_dispersions(px)?;
            for (k, value) in [e, m, v, f64::from(px[c])].into_iter().enumerate() {
                moments[k][0].push(value);
                moments[k][region].push(value);
            }
        }
    }
    let mut out = Vec::with_capacity(NUM_FEATURES);
    for measure in &moments {
        for region in measure {
            out.push(region.mean());
            out.push(region.var());
        }
    }
    let s = seg.pixels.len() as f64;
    let s_in = seg.inner.len() as f64;
    let s_bd = seg.boundary.len() as f64;
    let (rel, rel_in) = (s / s_bd, s_in / s_bd);
    out.extend([s, s_in, s_bd, rel, rel_in]);
    for measure in &moments[..3] {
        out.push(measure[0].mean() * rel);
        out.push(measure[2].mean() * rel_in);
    }
    debug_assert_eq!(out.len(), NUM_FEATURES);
    Ok(out)
}

/// How a segment's IoU is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentIouMode {
    /// Against the ground-truth components of the class that touch the segment.
    #[default]
    Adjusted,
    /// Against every ground-truth pixel of the class.
    FullClass,
}

/// Precomputed ground-truth components for repeated segment IoU queries.
pub struct GroundTruthIndex<'a> {
    gt: &'a LabelMask,
    comps: ComponentLabels,
    class_totals: Vec<u64>,
}

impl<'a> GroundTruthIndex<'a> {
    pub fn new(gt: &'a LabelMask) -> Self {
        Self {
            gt,
            comps: label_components(gt),
            class_totals: gt.class_counts(),
        }
    }

    pub fn segment_iou(&self, seg: &Segment, mode: SegmentIouMode) -> f64 {
        let gt = self.gt.data();
        let c = seg.class;
        let mut inter = 0u64;
        let mut touched: Vec<u32> = Vec::new();
        for &p in &seg.pixels {
            if gt[p as usize] == c {
                inter += 1;
                let l = self.comps.labels[p as usize];
                if !touched.contains(&l) {
                    touched.push(l);
                }
            }
        }
        if inter == 0 {
            return 0.0;
        }
        let gt_part: u64 = match mode {
            SegmentIouMode::Adjusted => touched.iter().map(|&l| self.comps.sizes[l as usize]).sum(),
            SegmentIouMode::FullClass => self.class_totals[c as usize],
        };
        inter as f64 / (seg.pixels.len() as u64 + gt_part - inter) as f64
    }
}

/// Adjusted IoU of a segment: overlap with ground truth of its class over
/// the union with the class components it touches. 0 marks an error.
pub fn segment_iou(seg: &Segment, gt: &LabelMask) -> f64 {
    GroundTruthIndex::new(gt).segment_iou(seg, SegmentIouMode::Adjusted)
}

/// One segment's features plus its identity and label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub image_id: String,
    pub segment_index: usize,
    pub domain: Domain,
    pub class: usize,
    pub features: Vec<f64>,
    pub segment_iou: f64,
    pub is_error: bool,
}

impl SegmentRecord {
    pub fn feature(&self, name: &str) -> Result<f64> {
        Ok(self.features[FeatureRegistry.index_of(name)?])
    }
}

/// Records of every predicted segment of one domain of a sample.
pub fn extract_records(
    sample: &PairedSample,
    domain: Domain,
    mode: SegmentIouMode,
) -> Result<Vec<SegmentRecord>> {
    let (pred, prob) = match domain {
        Domain::Real => (&sample.pred_real, &sample.prob_real),
        Domain::Synthetic => (&sample.pred_syn, &sample.prob_syn),
    };
    let prob = prob.as_ref().ok_or_else(|| {
        Error::UnavailableFeatures(format!(
            "sample `{}` has no {domain} probability map",
            sample.sample_id
        ))
    })?;
    prob.ensure_congruent(pred)?;
    pred.ensure_congruent(&sample.gt)?;
    let index = GroundTruthIndex::new(&sample.gt);
    segments_of(pred)
        .iter()
        .map(|seg| {
            let features = segment_features(seg, prob)?;
            let iou = index.segment_iou(seg, mode);
            Ok(SegmentRecord {
                image_id: sample.sample_id.clone(),
                segment_index: seg.index,
                domain,
                class: seg.class as usize,
                features,
                segment_iou: iou,
                is_error: iou == 0.0,
            })
        })
        .collect()
}

/// Records of all samples, ordered by sample, then domain (real first),
/// then segment index.
pub fn dataset_records(samples: &[PairedSample], mode: SegmentIouMode) -> Result<Vec<SegmentRecord>> {
    let per_sample = samples
        .par_iter()
        .map(|s| {
            let mut recs = extract_records(s, Domain::Real, mode)?;
            recs.extend(extract_records(s, Domain::Synthetic, mode)?);
            Ok(recs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(c: usize, rows: &[&[u8]]) -> LabelMask {
        LabelMask::from_rows(c, rows).unwrap()
    }

    #[test]
    fn registry_is_unique_and_complete() {
        let mut names = FEATURE_NAMES.to_vec();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), NUM_FEATURES);
        for n in FEATURE_NAMES {
            assert!(!FeatureRegistry.definition(n).unwrap().is_empty());
        }
        assert!(matches!(FeatureRegistry.index_of("nope"), Err(Error::Registry(_))));
        assert_eq!(
            FeatureRegistry.definition("entropy_bd_var").unwrap(),
            "variance of the pixel-wise normalized entropy over boundary pixels"
        );
        assert_eq!(
            FeatureRegistry.definition("prob_in_mean").unwrap(),
            "mean of the pixel-wise predicted-class probability over inner pixels"
        );
    }

    #[test]
    fn uniform_mask_is_one_segment() {
        let mask = LabelMask::filled(5, 4, 3, 2).unwrap();
        let segs = connected_components(&mask);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].size(), 20);
        assert_eq!(segs[0].class, 2);
    }

    #[test]
    fn eight_connectivity() {
        let segs = connected_components(&m(2, &[&[1, 1, 0], &[0, 1, 0]]));
        let sizes: Vec<(u8, usize)> = segs.iter().map(|s| (s.class, s.size())).collect();
        // (0,1) has no class-0 neighbour even diagonally
        assert_eq!(sizes, vec![(1, 3), (0, 2), (0, 1)]);

        let segs = connected_components(&m(2, &[&[1, 0], &[0, 1]]));
        let ones: Vec<_> = segs.iter().filter(|s| s.class == 1).collect();
        assert_eq!(ones.len(), 1);
        assert_eq!(ones[0].size(), 2);
    }

    #[test]
    fn ignore_pixels_form_no_segment() {
        let segs = connected_components(&m(2, &[&[IGNORE_LABEL, 1], &[IGNORE_LABEL, IGNORE_LABEL]]));
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].pixels, vec![1]);
    }

    #[test]
    fn u_shape_merges_late() {
        // both arms connect only through the bottom row
        let mask = m(2, &[&[1, 0, 1], &[1, 0, 1], &[1, 1, 1]]);
        let segs = connected_components(&mask);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].size(), 7);
    }

    fn square_in_frame() -> LabelMask {
        let mut rows = vec![vec![0u8; 5]; 5];
        for row in rows.iter_mut().take(4).skip(1) {
            row[1..4].fill(1);
        }
        let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
        m(2, &refs)
    }

    #[test]
    fn boundary_of_square() {
        let mask = square_in_frame();
        let seg = connected_components(&mask)
            .into_iter()
            .find(|s| s.class == 1)
            .unwrap();
        let seg = split_boundary_inner(seg, &mask);
        assert_eq!(seg.boundary.len(), 8);
        assert_eq!(seg.inner, vec![12]);
    }

    #[test]
    fn boundary_of_single_pixel_and_full_image() {
        let mask = m(2, &[&[0, 0], &[0, 1]]);
        let seg = split_boundary_inner(connected_components(&mask).remove(1), &mask);
        assert_eq!(seg.boundary, vec![3]);
        assert!(seg.inner.is_empty());

        let (w, h) = (7u32, 5u32);
        let mask = LabelMask::filled(w, h, 2, 0).unwrap();
        let seg = split_boundary_inner(connected_components(&mask).remove(0), &mask);
        let (w, h) = (w as usize, h as usize);
        assert_eq!(seg.boundary.len(), w * h - (w - 2) * (h - 2));
        assert_eq!(seg.inner.len(), (w - 2) * (h - 2));
    }

    #[test]
    fn segments_of_matches_two_step_split() {
        let mask = m(3, &[&[0, 1, 1, 2], &[1, 1, 1, 2], &[1, 1, 1, 0], &[2, 1, 0, 0]]);
        let fast = segments_of(&mask);
        let slow: Vec<_> = connected_components(&mask)
            .into_iter()
            .map(|s| split_boundary_inner(s, &mask))
            .collect();
        assert_eq!(fast, slow);
    }

    #[test]
    fn dispersion_examples() {
        assert_eq!(pixel_dispersions(&[0.0f64, 1.0, 0.0]).unwrap(), (0.0, 0.0, 0.0));
        let (e, m, v) = pixel_dispersions(&[0.25f64; 4]).unwrap();
        assert!((e - 1.0).abs() < 1e-12 && m == 1.0 && v == 0.75);
        let (e, m, v) = pixel_dispersions(&[0.75f64, 0.25]).unwrap();
        // -(0.75 ln 0.75 + 0.25 ln 0.25) / ln 2
        assert!((e - 0.811_278_124_459_132_8).abs() < 1e-12);
        assert_eq!((m, v), (0.5, 0.25));
        assert!(matches!(pixel_dispersions(&[1.0f64]), Err(Error::Domain(_))));
    }

    fn constant_prob(mask: &LabelMask, p_own: f32) -> ProbMap {
        let c = mask.num_classes();
        let other = (1.0 - p_own) / (c - 1) as f32;
        let data = mask
            .data()
            .iter()
            .flat_map(|&l| (0..c).map(move |k| if k == l as usize { p_own } else { other }))
            .collect();
        ProbMap::new(mask.width(), mask.height(), c, data).unwrap()
    }

    #[test]
    fn features_of_square() {
        let mask = square_in_frame();
        let seg = segments_of(&mask).into_iter().find(|s| s.class == 1).unwrap();
        let f = segment_features(&seg, &constant_prob(&mask, 1.0)).unwrap();
        let get = |n: &str| f[FeatureRegistry.index_of(n).unwrap()];
        assert_eq!(get("size"), 9.0);
        assert_eq!(get("size_bd"), 8.0);
        assert_eq!(get("size_in"), 1.0);
        assert_eq!(get("size_rel"), 1.125);
        assert_eq!(get("size_in_rel"), 0.125);
        for n in FEATURE_NAMES.iter().filter(|n| n.starts_with("entropy") || n.starts_with("margin") || n.starts_with("variation")) {
            assert_eq!(get(n), 0.0, "{n}");
        }
        assert_eq!(get("prob_mean"), 1.0);
        assert_eq!(get("prob_var"), 0.0);
    }

    #[test]
    fn constant_probabilities_have_zero_variance() {
        let mask = square_in_frame();
        let prob = constant_prob(&mask, 0.7);
        for seg in segments_of(&mask) {
            let f = segment_features(&seg, &prob).unwrap();
            for (name, v) in FEATURE_NAMES.iter().zip(&f) {
                if name.ends_with("_var") {
                    assert!(v.abs() < 1e-12, "{name} = {v}");
                }
            }
        }
    }

    #[test]
    fn empty_inner_features_are_zero() {
        let mask = m(2, &[&[0, 1]]);
        let seg = segments_of(&mask).remove(1);
        let f = segment_features(&seg, &constant_prob(&mask, 0.6)).unwrap();
        for n in ["entropy_in_mean", "entropy_in_var", "prob_in_mean", "size_in", "entropy_in_rel"] {
            assert_eq!(f[FeatureRegistry.index_of(n).unwrap()], 0.0);
        }
    }

    #[test]
    fn missing_probabilities_are_reported() {
        let gt = m(2, &[&[0, 1]]);
        let sample = PairedSample {
            sample_id: "s".into(),
            gt: gt.clone(),
            pred_real: gt.clone(),
            pred_syn: gt,
            prob_real: None,
            prob_syn: None,
        };
        assert!(matches!(
            extract_records(&sample, Domain::Real, SegmentIouMode::Adjusted),
            Err(Error::UnavailableFeatures(_))
        ));
    }

    #[test]
    fn segment_iou_examples() {
        let gt = m(2, &[&[1, 1, 0, 0], &[1, 1, 0, 0]]);
        let seg = connected_components(&gt).remove(0);
        assert_eq!(segment_iou(&seg, &gt), 1.0);

        // 4-pixel segment overlapping the 4-pixel gt block in 2 pixels
        let pred = m(2, &[&[0, 1, 1, 0], &[0, 1, 1, 0]]);
        let seg = connected_components(&pred).into_iter().find(|s| s.class == 1).unwrap();
        assert!((segment_iou(&seg, &gt) - 2.0 / 6.0).abs() < 1e-15);

        let pred = m(2, &[&[0, 0, 1, 1], &[0, 0, 1, 1]]);
        let seg = connected_components(&pred).into_iter().find(|s| s.class == 1).unwrap();
        assert_eq!(segment_iou(&seg, &gt), 0.0);
    }

    #[test]
    fn adjusted_iou_ignores_untouched_components() {
        // gt has two class-1 blobs; the segment only covers the left one
        let gt = m(2, &[&[1, 0, 0, 1]]);
        let pred = m(2, &[&[1, 0, 0, 0]]);
        let seg = connected_components(&pred).remove(0);
        let index = GroundTruthIndex::new(&gt);
        assert_eq!(index.segment_iou(&seg, SegmentIouMode::Adjusted), 1.0);
        assert_eq!(index.segment_iou(&seg, SegmentIouMode::FullClass), 0.5);
    }

    fn random_mask(c: u8) -> impl Strategy<Value = LabelMask> {
        let px = prop_oneof![10 => 0..c, 1 => Just(IGNORE_LABEL)];
        proptest::collection::vec(px, 12 * 10)
            .prop_map(move |d| LabelMask::new(12, 10, c as usize, d).unwrap())
    }

    proptest! {
        #[test]
        fn segments_partition_labelled_pixels(mask in random_mask(3)) {
            let segs = segments_of(&mask);
            let mut seen = vec![0u8; mask.len()];
            for s in &segs {
                prop_assert!(!s.boundary.is_empty());
                prop_assert_eq!(s.pixels.len(), s.boundary.len() + s.inner.len());
                for &p in &s.pixels {
                    seen[p as usize] += 1;
                    prop_assert_eq!(mask.data()[p as usize], s.class);
                }
            }
            for (i, &v) in mask.data().iter().enumerate() {
                prop_assert_eq!(seen[i], u8::from(v != IGNORE_LABEL));
            }
        }

        #[test]
        fn dispersions_permutation_invariant(raw in proptest::collection::vec(0.001f64..1.0, 2..8), rot in 0usize..8) {
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let mut q = p.clone();
            let len = q.len();
            q.rotate_left(rot % len);
            q.reverse();
            let (a, b) = (pixel_dispersions(&p).unwrap(), pixel_dispersions(&q).unwrap());
            prop_assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12 && (a.2 - b.2).abs() < 1e-12);
            for v in [a.0, a.1, a.2] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn size_identities_and_iou_bound(pred in random_mask(3), gt in random_mask(3)) {
            let index = GroundTruthIndex::new(&gt);
            for seg in segments_of(&pred) {
                prop_assert!(seg.size() as f64 / seg.boundary.len() as f64 >= 1.0);
                let inter = seg.pixels.iter().filter(|&&p| gt.data()[p as usize] == seg.class).count();
                let iou = index.segment_iou(&seg, SegmentIouMode::Adjusted);
                prop_assert!(iou <= inter as f64 / seg.size() as f64 + 1e-15);
                prop_assert!((0.0..=1.0).contains(&iou));
            }
        }
    }
}
