//! Interpretable real-vs-synthetic discriminator.
//!
//! An ensemble of shallow decision trees is fit on bootstrap-free row and
//! feature subsamples. Every root-to-leaf path whose leaf favours the target
//! domain becomes a candidate rule (a conjunction of threshold conditions).
//! Candidates are filtered by precision and recall, deduplicated, ranked by
//! F1 and the top `k` form a disjunctive rule set.

use std::cmp::Ordering;
use std::fmt;

use rand::seq::{index::sample, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_from, TAG_SPLIT, TAG_TREE};
use crate::segmeta::{Domain, FeatureRegistry, SegmentRecord, FEATURE_NAMES, NUM_FEATURES};

/// Thresholds closer than this are the same threshold.
pub const THRESHOLD_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
}

impl Comparator {
    #[inline]
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Le => value <= threshold,
            Comparator::Gt => value > threshold,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Le => "<=",
            Comparator::Gt => ">",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: String,
    pub comparator: Comparator,
    pub threshold: f64,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.feature, self.comparator, self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub conditions: Vec<Condition>,
    pub target: Domain,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Rule {
    /// Whether every condition holds for `record`.
    pub fn matches(&self, record: &SegmentRecord) -> Result<bool> {
        for cond in &self.conditions {
            let idx = FeatureRegistry.index_of(&cond.feature)?;
            if !cond.comparator.holds(record.features[idx], cond.threshold) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body: Vec<String> = self.conditions.iter().map(|c| c.to_string()).collect();
        write!(f, "{} -> {}", body.join(" and "), self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub top_k: usize,
    pub precision_min: f64,
    pub recall_min: f64,
}

/// Disjunction of rules predicting `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub target: Domain,
    pub rules: Vec<Rule>,
    pub selection: SelectionParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleConfig {
    pub n_estimators: usize,
    /// Fraction of training rows each tree sees.
    pub max_samples: f64,
    /// Fraction of features each tree sees.
    pub max_features: f64,
    pub max_depth: usize,
    pub precision_min: f64,
    pub recall_min: f64,
    pub top_k: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            n_estimators: 50,
            max_samples: 0.8,
            max_features: 0.5,
            max_depth: 1,
            precision_min: 0.6,
            recall_min: 0.05,
            top_k: 4,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        frac("max_samples", self.max_samples)?;
        frac("max_features", self.max_features)?;
        frac("train_fraction", self.train_fraction)?;
        if self.n_estimators == 0 || self.max_depth == 0 || self.top_k == 0 {
            return Err(Error::InvalidConfig(
                "n_estimators, max_depth and top_k must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.precision_min) || !(0.0..=1.0).contains(&self.recall_min) {
            return Err(Error::InvalidConfig("precision/recall minima must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    AllSegments,
    ErrorsOnly,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::AllSegments => "all_segments",
            Variant::ErrorsOnly => "errors_only",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Variant::AllSegments => 1,
            Variant::ErrorsOnly => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorResult {
    pub class: usize,
    pub variant: Variant,
    pub target: Domain,
    /// `None` when no candidate passed the filters; the discriminator then
    /// always answers the non-target domain.
    pub ruleset: Option<RuleSet>,
    pub test_accuracy: f64,
    pub balanced_accuracy: f64,
    /// Accuracy of always answering the more frequent test domain.
    pub majority_baseline: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub real_count: usize,
    pub synthetic_count: usize,
}

/// Seeded shuffle; the first `ceil(fraction * n)` records train.
pub fn split_dataset<T: Clone>(records: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if records.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "split needs at least 2 records, got {}",
            records.len()
        )));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("train fraction {fraction} outside (0, 1]")));
    }
    let n = records.len();
    // tolerance keeps 0.8 * 15 from rounding up to 13
    let n_train = ((fraction * n as f64) - 1e-9).ceil() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::InsufficientData(format!(
            "fraction {fraction} of {n} records leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(derive_seed(seed, n as u64, TAG_SPLIT)));
    let train = order[..n_train].iter().map(|&i| records[i].clone()).collect();
    let test = order[n_train..].iter().map(|&i| records[i].clone()).collect();
    Ok((train, test))
}

/// Column-major feature table with a boolean target label per row.
struct Table {
    columns: Vec<Vec<f64>>,
    is_target: Vec<bool>,
}

impl Table {
    fn new(records: &[&SegmentRecord], target: Domain) -> Self {
        let columns = (0..NUM_FEATURES)
            .map(|f| records.iter().map(|r| r.features[f]).collect())
            .collect();
        Self {
            columns,
            is_target: records.iter().map(|r| r.domain == target).collect(),
        }
    }

    fn len(&self) -> usize {
        self.is_target.len()
    }
}

type Path = Vec<(usize, Comparator, f64)>;

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// Lowest weighted Gini over every midpoint of every feature; ties keep the
/// first feature and the lowest threshold.
fn best_split(table: &Table, rows: &[u32], features: &[usize]) -> Option<Split> {
    let n = rows.len();
    let pos_total = rows.iter().filter(|&&r| table.is_target[r as usize]).count();
    let mut best: Option<Split> = None;
    let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(n);
    for &f in features {
        let col = &table.columns[f];
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (col[r as usize], table.is_target[r as usize])));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_pos = 0;
        for i in 0..n - 1 {
            left_pos += usize::from(sorted[i].1);
            let (lo, hi) = (sorted[i].0, sorted[i + 1].0);
            if lo == hi {
                continue;
            }
            let left_n = i + 1;
            let right_n = n - left_n;
            let impurity = (left_n as f64 * gini(left_pos, left_n)
                + right_n as f64 * gini(pos_total - left_pos, right_n))
                / n as f64;
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split {
                    feature: f,
                    threshold,
                    impurity,
                });
            }
        }
    }
    best
}

fn grow(
    table: &Table,
    rows: &[u32],
    features: &[usize],
    depth: usize,
    max_depth: usize,
    path: &mut Path,
    out: &mut Vec<Path>,
) {
    let n = rows.len();
    let pos = rows.iter().filter(|&&r| table.is_target[r as usize]).count();
    let leaf = |path: &Path, out: &mut Vec<Path>| {
        if !path.is_empty() && 2 * pos > n {
            out.push(path.clone());
        }
    };
    if depth >= max_depth || pos == 0 || pos == n {
        leaf(path, out);
        return;
    }
    let parent = gini(pos, n);
    match best_split(table, rows, features) {
        Some(split) if split.impurity < parent - 1e-12 => {
            let col = &table.columns[split.feature];
            let (left, right): (Vec<u32>, Vec<u32>) = rows
                .iter()
                .partition(|&&r| col[r as usize] <= split.threshold);
            for (side, cmp) in [(left, Comparator::Le), (right, Comparator::Gt)] {
                path.push((split.feature, cmp, split.threshold));
                grow(table, &side, features, depth + 1, max_depth, path, out);
                path.pop();
            }
        }
        _ => leaf(path, out),
    }
}

fn path_stats(table: &Table, path: &Path) -> (f64, f64) {
    let (mut hits, mut true_hits, mut positives) = (0usize, 0usize, 0usize);
    for r in 0..table.len() {
        let t = table.is_target[r];
        positives += usize::from(t);
        if path.iter().all(|&(f, cmp, thr)| cmp.holds(table.columns[f][r], thr)) {
            hits += 1;
            true_hits += usize::from(t);
        }
    }
    let precision = if hits == 0 { 0.0 } else { true_hits as f64 / hits as f64 };
    let recall = if positives == 0 { 0.0 } else { true_hits as f64 / positives as f64 };
    (precision, recall)
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Fits `n_estimators` depth-limited trees and turns every target-majority
/// leaf path into a candidate rule, scored on the full training set.
pub fn fit_tree(train: &[SegmentRecord], target: Domain, config: &RuleConfig) -> Result<Vec<Rule>> {
    config.validate()?;
    let refs: Vec<&SegmentRecord> = train.iter().collect();
    fit_refs(&refs, target, config)
}

fn fit_refs(train: &[&SegmentRecord], target: Domain, config: &RuleConfig) -> Result<Vec<Rule>> {
    let targets = train.iter().filter(|r| r.domain == target).count();
    if targets == 0 || targets == train.len() {
        return Err(Error::DegenerateData(
            "training data holds a single domain".into(),
        ));
    }
    if let Some(bad) = train.iter().find(|r| r.features.len() != NUM_FEATURES) {
        return Err(Error::Congruence(format!(
            "record has {} features, expected {NUM_FEATURES}",
            bad.features.len()
        )));
    }
    let table = Table::new(train, target);
    let n = table.len();
    let n_rows = ((config.max_samples * n as f64).round() as usize).clamp(2.min(n), n);
    let n_feats = ((config.max_features * NUM_FEATURES as f64).round() as usize).clamp(1, NUM_FEATURES);

    let paths: Vec<Vec<Path>> = (0..config.n_estimators)
        .into_par_iter()
        .map(|est| {
            let mut rng = rng_from(derive_seed(config.seed, est as u64, TAG_TREE));
            let mut rows: Vec<u32> = sample(&mut rng, n, n_rows).into_iter().map(|i| i as u32).collect();
            rows.sort_unstable();
            let mut feats = sample(&mut rng, NUM_FEATURES, n_feats).into_vec();
            feats.sort_unstable();
            let mut out = Vec::new();
            grow(&table, &rows, &feats, 0, config.max_depth, &mut Vec::new(), &mut out);
            out
        })
        .collect();

    Ok(paths
        .into_iter()
        .flatten()
        .map(|path| {
            let (precision, recall) = path_stats(&table, &path);
            Rule {
                conditions: path
                    .iter()
                    .map(|&(f, comparator, threshold)| Condition {
                        feature: FEATURE_NAMES[f].to_owned(),
                        comparator,
                        threshold,
                    })
                    .collect(),
                target,
                precision,
                recall,
                f1: f1(precision, recall),
            }
        })
        .collect())
}

/// Conditions sorted by (feature, comparator, threshold) with redundant
/// bounds on the same feature merged into the tightest one.
fn canonical(rule: &Rule) -> Vec<Condition> {
    let mut conds = rule.conditions.clone();
    conds.sort_by(cmp_condition);
    let mut out: Vec<Condition> = Vec::with_capacity(conds.len());
    for c in conds {
        match out.last_mut() {
            Some(prev) if prev.feature == c.feature && prev.comparator == c.comparator => {
                // sorted ascending: for <= keep the smaller, for > the larger
                if c.comparator == Comparator::Gt {
                    prev.threshold = c.threshold;
                }
            }
            _ => out.push(c),
        }
    }
    out
}

fn cmp_condition(a: &Condition, b: &Condition) -> Ordering {
    a.feature
        .cmp(&b.feature)
        .then(a.comparator.cmp(&b.comparator))
        .then(a.threshold.total_cmp(&b.threshold))
}

fn same_conditions(a: &[Condition], b: &[Condition]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.feature == y.feature
                && x.comparator == y.comparator
                && (x.threshold - y.threshold).abs() <= THRESHOLD_EPS
        })
}

/// Filters, deduplicates and ranks candidates; keeps the best `k`.
pub fn select_rules(
    candidates: &[Rule],
    precision_min: f64,
    recall_min: f64,
    k: usize,
) -> Result<RuleSet> {
    let Some(first) = candidates.first() else {
        return Err(Error::NoRule);
    };
    let target = first.target;
    let mut kept: Vec<Rule> = Vec::new();
    for rule in candidates {
        if rule.target != target || rule.precision < precision_min || rule.recall < recall_min {
            continue;
        }
        let conditions = canonical(rule);
        if kept.iter().any(|r| same_conditions(&r.conditions, &conditions)) {
            continue;
        }
        kept.push(Rule {
            conditions,
            ..rule.clone()
        });
    }
    if kept.is_empty() {
        return Err(Error::NoRule);
    }
    kept.sort_by(|a, b| {
        b.f1.total_cmp(&a.f1)
            .then(b.precision.total_cmp(&a.precision))
            .then_with(|| {
                a.conditions
                    .iter()
                    .zip(&b.conditions)
                    .map(|(x, y)| cmp_condition(x, y))
                    .find(|o| o.is_ne())
                    .unwrap_or(a.conditions.len().cmp(&b.conditions.len()))
            })
    });
    kept.truncate(k);
    Ok(RuleSet {
        target,
        rules: kept,
        selection: SelectionParams {
            top_k: k,
            precision_min,
            recall_min,
        },
    })
}

/// The target domain when any rule fires, the other domain otherwise.
pub fn predict(ruleset: &RuleSet, record: &SegmentRecord) -> Result<Domain> {
    for rule in &ruleset.rules {
        if rule.matches(record)? {
            return Ok(ruleset.target);
        }
    }
    Ok(ruleset.target.other())
}

/// Raw and balanced accuracy of a (possibly empty) rule set on `records`.
pub fn evaluate(
    ruleset: Option<&RuleSet>,
    target: Domain,
    records: &[SegmentRecord],
) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::InsufficientData("evaluation on no records".into()));
    }
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for r in records {
        let guess = match ruleset {
            Some(rs) => predict(rs, r)?,
            None => target.other(),
        };
        let slot = usize::from(r.domain == Domain::Synthetic);
        total[slot] += 1;
        correct[slot] += usize::from(guess == r.domain);
    }
    let accuracy = (correct[0] + correct[1]) as f64 / records.len() as f64;
    let recalls: Vec<f64> = (0..2)
        .filter(|&i| total[i] > 0)
        .map(|i| correct[i] as f64 / total[i] as f64)
        .collect();
    let balanced = recalls.iter().sum::<f64>() / recalls.len() as f64;
    Ok((accuracy, balanced))
}

/// Learns rules separating real from synthetic segments of class `class`
/// and reports their test accuracy.
pub fn run_discriminator(
    records: &[SegmentRecord],
    class: usize,
    variant: Variant,
    config: &RuleConfig,
) -> Result<DiscriminatorResult> {
    config.validate()?;
    let rows: Vec<SegmentRecord> = records
        .iter()
        .filter(|r| r.class == class && (variant == Variant::AllSegments || r.is_error))
        .cloned()
        .collect();
    let real_count = rows.iter().filter(|r| r.domain == Domain::Real).count();
    let synthetic_count = rows.len() - real_count;
    if real_count.min(synthetic_count) < 2 {
        return Err(Error::DegenerateData(format!(
            "not enough components to learn rules for class {class} ({}: {real_count} real, {synthetic_count} synthetic)",
            variant.as_str()
        )));
    }
    let target = if real_count < synthetic_count {
        Domain::Real
    } else {
        Domain::Synthetic
    };
    let split_seed = derive_seed(config.seed, class as u64, variant.tag());
    let (train, test) = split_dataset(&rows, config.train_fraction, split_seed)?;
    let candidates = fit_tree(&train, target, config)?;
    let ruleset = match select_rules(&candidates, config.precision_min, config.recall_min, config.top_k) {
        Ok(rs) => Some(rs),
        Err(Error::NoRule) => None,
        Err(e) => return Err(e),
    };
    let (test_accuracy, balanced_accuracy) = evaluate(ruleset.as_ref(), target, &test)?;
    let test_real = test.iter().filter(|r| r.domain == Domain::Real).count();
    let majority = test_real.max(test.len() - test_real);
    Ok(DiscriminatorResult {
        class,
        variant,
        target,
        ruleset,
        test_accuracy,
        balanced_accuracy,
        majority_baseline: majority as f64 / test.len() as f64,
        train_size: train.len(),
        test_size: test.len(),
        real_count,
        synthetic_count,
    })
}
