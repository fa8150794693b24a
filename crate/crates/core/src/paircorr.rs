//! Paired per-image score series and their correlation.
//!
//! Each sample is scored twice against the shared ground truth: once for
//! the prediction on the real input and once for the prediction on the
//! synthetic input. A high correlation between the two series is evidence
//! that test results on synthetic data carry over to real data.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{confusion, ConfusionMatrix, PairedSample};

/// Which score a series carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassScope {
    Miou,
    Class(usize),
}

impl fmt::Display for ClassScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassScope::Miou => write!(f, "miou"),
            ClassScope::Class(c) => write!(f, "iou_class_{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
}

/// Treatment of a pair where one side is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedPolicy {
    /// Drop the pair.
    #[default]
    Exclude,
    /// Score the undefined side as 0 when the other side is defined.
    ImputeZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    pub method: CorrelationMethod,
    /// Fewest usable pairs for a class coefficient to be reported.
    pub min_pairs: usize,
    pub undefined_policy: UndefinedPolicy,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            method: CorrelationMethod::Pearson,
            min_pairs: 10,
            undefined_policy: UndefinedPolicy::Exclude,
        }
    }
}

/// Index-aligned real/synthetic scores, one entry per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub metric_name: String,
    pub class_scope: ClassScope,
    pub sample_ids: Vec<String>,
    pub values_real: Vec<Option<f64>>,
    pub values_syn: Vec<Option<f64>>,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    /// Pairs usable for correlation under `policy`, in sample order.
    pub fn defined_pairs(&self, policy: UndefinedPolicy) -> (Vec<f64>, Vec<f64>) {
        self.values_real
            .iter()
            .zip(&self.values_syn)
            .filter_map(|(&r, &s)| match (policy, (r, s)) {
                (_, (Some(r), Some(s))) => Some((r, s)),
                (UndefinedPolicy::ImputeZero, (Some(r), None)) => Some((r, 0.0)),
                (UndefinedPolicy::ImputeZero, (None, Some(s))) => Some((0.0, s)),
                _ => None,
            })
            .unzip()
    }
}

fn scope_score(cm: &ConfusionMatrix, scope: ClassScope) -> Option<f64> {
    match scope {
        ClassScope::Miou => cm.miou(),
        ClassScope::Class(c) => cm.iou(c),
    }
}

/// Per-sample confusion matrices for the real and synthetic predictions.
pub(crate) fn sample_confusions(
    samples: &[PairedSample],
) -> Result<Vec<(ConfusionMatrix, ConfusionMatrix)>> {
    samples
        .par_iter()
        .map(|s| Ok((confusion(&s.pred_real, &s.gt)?, confusion(&s.pred_syn, &s.gt)?)))
        .collect()
}

fn series_from_confusions(
    samples: &[PairedSample],
    cms: &[(ConfusionMatrix, ConfusionMatrix)],
    scope: ClassScope,
) -> ScoreSeries {
    let (values_real, values_syn) = cms
        .iter()
        .map(|(r, s)| (scope_score(r, scope), scope_score(s, scope)))
        .unzip();
    ScoreSeries {
        metric_name: scope.to_string(),
        class_scope: scope,
        sample_ids: samples.iter().map(|s| s.sample_id.clone()).collect(),
        values_real,
        values_syn,
    }
}

/// Scores every sample's real and synthetic prediction under `scope`.
pub fn build_series(samples: &[PairedSample], scope: ClassScope) -> Result<ScoreSeries> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let ClassScope::Class(c) = scope {
        let num_classes = samples[0].num_classes();
        if c >= num_classes {
            return Err(Error::Domain(format!("class {c} outside 0..{num_classes}")));
        }
    }
    let cms = sample_confusions(samples)?;
    Ok(series_from_confusions(samples, &cms, scope))
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Congruence(format!(
            "series lengths {} and {} differ",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "correlation needs at least 2 pairs, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    // single sqrt keeps pearson(x, x) at exactly 1
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Fractional ranks (1-based), ties sharing their average rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson over tie-averaged ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Congruence(format!(
            "series lengths {} and {} differ",
            xs.len(),
            ys.len()
        )));
    }
    pearson(&ranks(xs), &ranks(ys))
}

pub fn correlate(xs: &[f64], ys: &[f64], method: CorrelationMethod) -> Result<f64> {
    match method {
        CorrelationMethod::Pearson => pearson(xs, ys),
        CorrelationMethod::Spearman => spearman(xs, ys),
    }
}

/// Outcome of correlating one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Coefficient {
    Reported { value: f64 },
    InsufficientSamples,
    /// Enough pairs, but at least one side is constant.
    Undefined,
}

impl Coefficient {
    pub fn value(&self) -> Option<f64> {
        match self {
            Coefficient::Reported { value } => Some(*value),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCorrelation {
    pub class: usize,
    pub pairs: usize,
    pub coefficient: Coefficient,
    /// Pooled dataset IoU of the class on real predictions.
    pub pooled_iou_real: Option<f64>,
    pub pooled_iou_syn: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub config: CorrelationConfig,
    pub miou_pairs: usize,
    pub miou_correlation: Coefficient,
    /// Mean of per-image mIoU per domain.
    pub mean_miou_real: Option<f64>,
    pub mean_miou_syn: Option<f64>,
    /// mIoU over pixel counts pooled across the dataset.
    pub pooled_miou_real: Option<f64>,
    pub pooled_miou_syn: Option<f64>,
    pub classes: Vec<ClassCorrelation>,
    pub miou_series: ScoreSeries,
}

fn coefficient_for(
    series: &ScoreSeries,
    config: &CorrelationConfig,
    min_pairs: usize,
) -> Result<(usize, Coefficient)> {
    let (xs, ys) = series.defined_pairs(config.undefined_policy);
    let n = xs.len();
    if n < min_pairs.max(2) {
        return Ok((n, Coefficient::InsufficientSamples));
    }
    match correlate(&xs, &ys, config.method) {
        Ok(value) => Ok((n, Coefficient::Reported { value })),
        Err(Error::UndefinedCorrelation(_)) => Ok((n, Coefficient::Undefined)),
        Err(e) => Err(e),
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Correlates per-class IoU and per-image mIoU between the two domains.
pub fn classwise_correlations(
    samples: &[PairedSample],
    config: &CorrelationConfig,
) -> Result<CorrelationReport> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let num_classes = samples[0].num_classes();
    let cms = sample_confusions(samples)?;

    let mut pooled_real = ConfusionMatrix::zeros(num_classes);
    let mut pooled_syn = ConfusionMatrix::zeros(num_classes);
    for (r, s) in &cms {
        pooled_real.accumulate(r);
        pooled_syn.accumulate(s);
    }

    let classes = (0..num_classes)
        .map(|c| {
            let series = series_from_confusions(samples, &cms, ClassScope::Class(c));
            let (pairs, coefficient) = coefficient_for(&series, config, config.min_pairs)?;
            Ok(ClassCorrelation {
                class: c,
                pairs,
                coefficient,
                pooled_iou_real: pooled_real.iou(c),
                pooled_iou_syn: pooled_syn.iou(c),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let miou_series = series_from_confusions(samples, &cms, ClassScope::Miou);
    // the mIoU series is defined for every image with any labelled pixel
    let (miou_pairs, miou_correlation) = coefficient_for(&miou_series, config, 2)?;
    let real: Vec<f64> = miou_series.values_real.iter().flatten().copied().collect();
    let syn: Vec<f64> = miou_series.values_syn.iter().flatten().copied().collect();

    Ok(CorrelationReport {
        config: config.clone(),
        miou_pairs,
        miou_correlation,
        mean_miou_real: mean(&real),
        mean_miou_syn: mean(&syn),
        pooled_miou_real: pooled_real.miou(),
        pooled_miou_syn: pooled_syn.miou(),
        classes,
        miou_series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{iou_class, LabelMask};
    use proptest::prelude::*;

    #[test]
    fn pearson_closed_forms() {
        assert_eq!(pearson(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), 1.0);
        assert_eq!(pearson(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), -1.0);
        // means 2, deviations (-1,0,1) and (-1,1,0): sxy=1, sxx=syy=2
        assert!((pearson(&[1., 2., 3.], &[1., 3., 2.]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(
            pearson(&[1., 1., 1.], &[1., 2., 3.]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            pearson(&[1., 2.], &[1., 2., 3.]),
            Err(Error::Congruence(_))
        ));
        assert!(matches!(
            pearson(&[1.], &[1.]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn spearman_uses_average_ranks() {
        assert_eq!(ranks(&[10., 20., 20., 5.]), vec![2.0, 3.5, 3.5, 1.0]);
        // monotone but nonlinear relation has rank correlation 1
        assert!((spearman(&[1., 2., 3., 4.], &[1., 8., 27., 64.]).unwrap() - 1.0).abs() < 1e-12);
    }

    fn sample(id: &str, gt: &[&[u8]], real: &[&[u8]], syn: &[&[u8]], c: usize) -> PairedSample {
        PairedSample {
            sample_id: id.into(),
            gt: LabelMask::from_rows(c, gt).unwrap(),
            pred_real: LabelMask::from_rows(c, real).unwrap(),
            pred_syn: LabelMask::from_rows(c, syn).unwrap(),
            prob_real: None,
            prob_syn: None,
        }
    }

    #[test]
    fn series_identity_is_constant_one() {
        let rows: &[&[u8]] = &[&[0, 1], &[1, 2]];
        let s = vec![sample("a", rows, rows, rows, 3), sample("b", rows, rows, rows, 3)];
        let series = build_series(&s, ClassScope::Miou).unwrap();
        assert_eq!(series.values_real, vec![Some(1.0); 2]);
        assert_eq!(series.values_syn, vec![Some(1.0); 2]);
    }

    #[test]
    fn series_absent_class() {
        let rows: &[&[u8]] = &[&[0, 1]];
        let s = vec![sample("a", rows, rows, rows, 3)];
        let series = build_series(&s, ClassScope::Class(2)).unwrap();
        assert_eq!(series.values_real, vec![None]);
        assert_eq!(series.values_syn, vec![None]);
        assert!(matches!(build_series(&[], ClassScope::Miou), Err(Error::EmptyDataset)));
    }

    #[test]
    fn series_matches_pixel_oracle() {
        let s = vec![
            sample("a", &[&[0, 1, 1]], &[&[0, 1, 0]], &[&[1, 1, 1]], 2),
            sample("b", &[&[1, 1, 1]], &[&[1, 1, 1]], &[&[0, 0, 1]], 2),
            sample("c", &[&[0, 0, 1]], &[&[0, 1, 1]], &[&[0, 0, 0]], 2),
        ];
        let series = build_series(&s, ClassScope::Class(1)).unwrap();
        // a: real 1/2, syn 2/3; b: real 1, syn 1/3; c: real 1/2, syn 0
        assert_eq!(series.values_real, vec![Some(0.5), Some(1.0), Some(0.5)]);
        assert_eq!(series.values_syn, vec![Some(2.0 / 3.0), Some(1.0 / 3.0), Some(0.0)]);
        for (i, smp) in s.iter().enumerate() {
            assert_eq!(series.values_real[i], iou_class(&smp.pred_real, &smp.gt, 1).unwrap());
        }
    }

    #[test]
    fn identical_predictions_correlate_perfectly() {
        let preds: [&[u8]; 4] = [&[0, 1, 1, 1], &[0, 0, 1, 1], &[1, 1, 1, 1], &[0, 0, 0, 1]];
        let samples: Vec<_> = (0..12)
            .map(|i| {
                let p = preds[i % 4];
                sample(&i.to_string(), &[&[0, 0, 1, 1]], &[p], &[p], 2)
            })
            .collect();
        let report = classwise_correlations(&samples, &CorrelationConfig::default()).unwrap();
        assert_eq!(report.miou_correlation, Coefficient::Reported { value: 1.0 });
        for class in &report.classes {
            assert_eq!(class.coefficient, Coefficient::Reported { value: 1.0 });
        }
    }

    #[test]
    fn rare_class_is_insufficient() {
        let samples: Vec<_> = (0..12)
            .map(|i| {
                if i < 3 {
                    sample(&i.to_string(), &[&[0, 2]], &[&[0, 2]], &[&[2, 2]], 3)
                } else {
                    sample(&i.to_string(), &[&[0, 1]], &[&[0, 1]], &[&[1, 1]], 3)
                }
            })
            .collect();
        let report = classwise_correlations(&samples, &CorrelationConfig::default()).unwrap();
        assert_eq!(report.classes[2].pairs, 3);
        assert_eq!(report.classes[2].coefficient, Coefficient::InsufficientSamples);
    }

    #[test]
    fn impute_zero_keeps_one_sided_pairs() {
        let series = ScoreSeries {
            metric_name: "x".into(),
            class_scope: ClassScope::Class(0),
            sample_ids: vec!["a".into(), "b".into(), "c".into()],
            values_real: vec![Some(0.5), None, None],
            values_syn: vec![Some(0.25), Some(0.0), None],
        };
        assert_eq!(series.defined_pairs(UndefinedPolicy::Exclude).0.len(), 1);
        let (r, s) = series.defined_pairs(UndefinedPolicy::ImputeZero);
        assert_eq!(r, vec![0.5, 0.0]);
        assert_eq!(s, vec![0.25, 0.0]);
    }

    fn nonconstant(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-100.0f64..100.0, len)
            .prop_filter("non-constant", |v| v.iter().any(|&x| (x - v[0]).abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn pearson_affine_invariance(
            (xs, ys) in (3usize..30).prop_flat_map(|n| (nonconstant(n), nonconstant(n))),
            a in 0.1f64..10.0,
            b in -50.0f64..50.0,
        ) {
            let r = pearson(&xs, &ys).unwrap();
            let pos: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let neg: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
            prop_assert!((pearson(&pos, &ys).unwrap() - r).abs() < 1e-9);
            prop_assert!((pearson(&neg, &ys).unwrap() + r).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&r));
        }

        #[test]
        fn pearson_self_is_one(xs in (2usize..40).prop_flat_map(nonconstant)) {
            prop_assert_eq!(pearson(&xs, &xs).unwrap(), 1.0);
        }

        #[test]
        fn dropping_absent_pairs_is_order_independent(
            vals in proptest::collection::vec((proptest::option::of(0.0f64..1.0), proptest::option::of(0.0f64..1.0)), 1..40),
        ) {
            let mk = |v: &[(Option<f64>, Option<f64>)]| ScoreSeries {
                metric_name: "x".into(),
                class_scope: ClassScope::Miou,
                sample_ids: (0..v.len()).map(|i| i.to_string()).collect(),
                values_real: v.iter().map(|p| p.0).collect(),
                values_syn: v.iter().map(|p| p.1).collect(),
            };
            let (fx, fy) = mk(&vals).defined_pairs(UndefinedPolicy::Exclude);
            let mut rev = vals.clone();
            rev.reverse();
            let (mut rx, mut ry) = mk(&rev).defined_pairs(UndefinedPolicy::Exclude);
            rx.reverse();
            ry.reverse();
            prop_assert_eq!(fx, rx);
            prop_assert_eq!(fy, ry);
        }
    }
}
