//! End-to-end analysis of a paired dataset and the JSON/CSV artifacts it
//! produces.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AppConfig;
use crate::error::{Error, Result};
use crate::errordist::{
    aggregate_profile, boxplot_stats, errors_from_confusion, radar_data, BoxplotStats,
    ClassErrorProfile, PerImageErrorRow, RadarChart,
};
use crate::io::{write_segments_csv, LoadedDataset};
use crate::mask::PairedSample;
use crate::paircorr::{build_series, classwise_correlations, sample_confusions, ClassScope, CorrelationReport, ScoreSeries};
use crate::rulekit::{run_discriminator, DiscriminatorResult, Variant};
use crate::segmeta::{dataset_records, Domain, SegmentIouMode, SegmentRecord, REGISTRY_VERSION};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// File name of the report inside an output directory.
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub feature_registry: String,
    pub num_samples: usize,
    pub num_classes: usize,
    pub class_names: Vec<String>,
}

/// Boxplot summaries of one domain's per-image error fractions for a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBoxplots {
    pub tp: BoxplotStats,
    pub fns: BTreeMap<usize, BoxplotStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassErrorReport {
    pub class: usize,
    /// Profile per domain (`real`, `synthetic`); a domain is absent when no
    /// image contains the class.
    pub profiles: BTreeMap<String, ClassErrorProfile>,
    pub radar: Option<RadarChart>,
    pub boxplots: BTreeMap<String, DomainBoxplots>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorStatus {
    Ran,
    Skipped,
}

/// Outcome of one class × variant discriminator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DiscriminatorEntry {
    Ran(DiscriminatorResult),
    /// Too few segments of one domain to learn from.
    Degenerate {
        class: usize,
        variant: Variant,
        reason: String,
    },
}

impl DiscriminatorEntry {
    pub fn class(&self) -> usize {
        match self {
            DiscriminatorEntry::Ran(r) => r.class,
            DiscriminatorEntry::Degenerate { class, .. } => *class,
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            DiscriminatorEntry::Ran(r) => r.variant,
            DiscriminatorEntry::Degenerate { variant, .. } => *variant,
        }
    }

    pub fn result(&self) -> Option<&DiscriminatorResult> {
        match self {
            DiscriminatorEntry::Ran(r) => Some(r),
            DiscriminatorEntry::Degenerate { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub classes: usize,
    pub mean_test_accuracy: Option<f64>,
    pub mean_balanced_accuracy: Option<f64>,
    pub mean_majority_baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorReport {
    pub status: DiscriminatorStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub segment_iou: SegmentIouMode,
    /// Segment counts per class, keyed by domain.
    pub segment_counts: BTreeMap<String, Vec<usize>>,
    pub entries: Vec<DiscriminatorEntry>,
    pub summary: Vec<VariantSummary>,
}

impl DiscriminatorReport {
    pub fn skipped(reason: String, mode: SegmentIouMode) -> Self {
        Self {
            status: DiscriminatorStatus::Skipped,
            reason: Some(reason),
            segment_iou: mode,
            segment_counts: BTreeMap::new(),
            entries: Vec::new(),
            summary: Vec::new(),
        }
    }

    pub fn summary_for(&self, variant: Variant) -> Option<&VariantSummary> {
        self.summary.iter().find(|s| s.variant == variant)
    }
}

/// Everything `analyze` reports, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub meta: RunMeta,
    pub warnings: Vec<String>,
    pub correlation: CorrelationReport,
    /// Per-class IoU series, index = class (scatter-plot data).
    pub class_series: Vec<ScoreSeries>,
    pub errors: Vec<ClassErrorReport>,
    pub discriminator: DiscriminatorReport,
}

impl ReportBundle {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn class_errors(&self, class: usize) -> Option<&ClassErrorReport> {
        self.errors.iter().find(|e| e.class == class)
    }
}

/// Intermediate tables kept alongside the bundle for CSV output.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub bundle: ReportBundle,
    /// Per-image error rows keyed by domain.
    pub error_rows: BTreeMap<String, Vec<PerImageErrorRow>>,
    pub records: Option<Vec<SegmentRecord>>,
}

pub fn run_meta(samples: &[PairedSample], class_names: &[String], cfg: &AppConfig) -> RunMeta {
    RunMeta {
        tool: "segtransfer".into(),
        tool_version: TOOL_VERSION.into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        feature_registry: REGISTRY_VERSION.into(),
        num_samples: samples.len(),
        num_classes: samples.first().map_or(0, PairedSample::num_classes),
        class_names: class_names.to_vec(),
    }
}

/// Per-class IoU series for every class.
pub fn class_series(samples: &[PairedSample]) -> Result<Vec<ScoreSeries>> {
    let c = samples.first().ok_or(Error::EmptyDataset)?.num_classes();
    (0..c).map(|k| build_series(samples, ClassScope::Class(k))).collect()
}

/// Per-image TP/FN rows for both domains, keyed by domain name.
pub fn error_rows(samples: &[PairedSample]) -> Result<BTreeMap<String, Vec<PerImageErrorRow>>> {
    let num_classes = samples.first().ok_or(Error::EmptyDataset)?.num_classes();
    let cms = sample_confusions(samples)?;
    let mut real = Vec::new();
    let mut syn = Vec::new();
    for (s, (cm_real, cm_syn)) in samples.iter().zip(&cms) {
        for c in 0..num_classes {
            real.extend(errors_from_confusion(&s.sample_id, cm_real, c)?);
            syn.extend(errors_from_confusion(&s.sample_id, cm_syn, c)?);
        }
    }
    Ok(BTreeMap::from([
        (Domain::Real.to_string(), real),
        (Domain::Synthetic.to_string(), syn),
    ]))
}

/// Profiles, radar data and boxplots per class.
pub fn error_reports(
    rows: &BTreeMap<String, Vec<PerImageErrorRow>>,
    num_classes: usize,
) -> Result<Vec<ClassErrorReport>> {
    (0..num_classes)
        .map(|c| {
            let mut profiles = BTreeMap::new();
            let mut boxplots = BTreeMap::new();
            for (domain, rows) in rows {
                let class_rows: Vec<PerImageErrorRow> =
                    rows.iter().filter(|r| r.class == c).cloned().collect();
                if class_rows.is_empty() {
                    continue;
                }
                profiles.insert(domain.clone(), aggregate_profile(&class_rows, c)?);
                let tps: Vec<f64> = class_rows.iter().map(|r| r.tp).collect();
                let fns = (0..num_classes)
                    .filter(|&k| k != c)
                    .map(|k| {
                        let v: Vec<f64> = class_rows.iter().map(|r| r.fns[&k]).collect();
                        Ok((k, boxplot_stats(&v)?))
                    })
                    .collect::<Result<BTreeMap<_, _>>>()?;
                boxplots.insert(
                    domain.clone(),
                    DomainBoxplots {
                        tp: boxplot_stats(&tps)?,
                        fns,
                    },
                );
            }
            let radar = if profiles.is_empty() {
                None
            } else {
                Some(radar_data(&profiles)?)
            };
            Ok(ClassErrorReport {
                class: c,
                profiles,
                radar,
                boxplots,
            })
        })
        .collect()
}

/// Runs the discriminator for every class and both variants.
pub fn discriminator_report(
    records: &[SegmentRecord],
    num_classes: usize,
    cfg: &AppConfig,
) -> Result<DiscriminatorReport> {
    let mut segment_counts = BTreeMap::new();
    for domain in [Domain::Real, Domain::Synthetic] {
        let mut counts = vec![0usize; num_classes];
        for r in records.iter().filter(|r| r.domain == domain) {
            counts[r.class] += 1;
        }
        segment_counts.insert(domain.to_string(), counts);
    }
    let jobs: Vec<(usize, Variant)> = [Variant::AllSegments, Variant::ErrorsOnly]
        .into_iter()
        .flat_map(|v| (0..num_classes).map(move |c| (c, v)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(class, variant)| match run_discriminator(records, class, variant, &cfg.rules) {
            Ok(result) => Ok(DiscriminatorEntry::Ran(result)),
            Err(Error::DegenerateData(reason)) => Ok(DiscriminatorEntry::Degenerate {
                class,
                variant,
                reason,
            }),
            Err(e) => Err(e),
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let summary = [Variant::AllSegments, Variant::ErrorsOnly]
        .into_iter()
        .map(|variant| {
            let ran: Vec<&DiscriminatorResult> = entries
                .iter()
                .filter(|e| e.variant() == variant)
                .filter_map(DiscriminatorEntry::result)
                .collect();
            let mean = |f: fn(&DiscriminatorResult) -> f64| {
                (!ran.is_empty()).then(|| ran.iter().map(|r| f(r)).sum::<f64>() / ran.len() as f64)
            };
            VariantSummary {
                variant,
                classes: ran.len(),
                mean_test_accuracy: mean(|r| r.test_accuracy),
                mean_balanced_accuracy: mean(|r| r.balanced_accuracy),
                mean_majority_baseline: mean(|r| r.majority_baseline),
            }
        })
        .collect();
    Ok(DiscriminatorReport {
        status: DiscriminatorStatus::Ran,
        reason: None,
        segment_iou: cfg.segment_iou,
        segment_counts,
        entries,
        summary,
    })
}

/// Runs every analysis on a loaded dataset.
///
/// Without probability maps the discriminator is skipped and a warning is
/// recorded; that is not an error.
pub fn analyze(dataset: &LoadedDataset, cfg: &AppConfig) -> Result<Analysis> {
    let samples = &dataset.samples;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let num_classes = samples[0].num_classes();
    let mut warnings = dataset.warnings.clone();
    let correlation = classwise_correlations(samples, &cfg.correlation)?;
    let class_series = class_series(samples)?;
    let rows = error_rows(samples)?;
    let errors = error_reports(&rows, num_classes)?;
    let (discriminator, records) = if dataset.has_probabilities() {
        let records = dataset_records(samples, cfg.segment_iou)?;
        (discriminator_report(&records, num_classes, cfg)?, Some(records))
    } else {
        let reason = "probability maps missing; segment features unavailable".to_string();
        warnings.push(format!("discriminator skipped: {reason}"));
        (DiscriminatorReport::skipped(reason, cfg.segment_iou), None)
    };
    let class_names: Vec<String> = (0..num_classes).map(|c| dataset.manifest.class_name(c)).collect();
    Ok(Analysis {
        bundle: ReportBundle {
            meta: run_meta(samples, &class_names, cfg),
            warnings,
            correlation,
            class_series,
            errors,
            discriminator,
        },
        error_rows: rows,
        records,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    w.write_record(header).map_err(|e| Error::Io(e.into()))?;
    for row in rows {
        w.write_record(row).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Scatter data: one row per sample with mIoU and per-class IoU per domain.
pub fn write_series_csv(path: &Path, bundle: &ReportBundle) -> Result<()> {
    let mut header = vec!["sample_id".to_string(), "miou_real".into(), "miou_syn".into()];
    for s in &bundle.class_series {
        header.push(format!("{}_real", s.class_scope));
        header.push(format!("{}_syn", s.class_scope));
    }
    let miou = &bundle.correlation.miou_series;
    let rows: Vec<Vec<String>> = (0..miou.len())
        .map(|i| {
            let mut row = vec![
                miou.sample_ids[i].clone(),
                opt(miou.values_real[i]),
                opt(miou.values_syn[i]),
            ];
            for s in &bundle.class_series {
                row.push(opt(s.values_real[i]));
                row.push(opt(s.values_syn[i]));
            }
            row
        })
        .collect();
    write_csv_rows(path, &header, &rows)
}

/// One row per (domain, sample, class) with TP, FN and invalid fractions.
pub fn write_errors_csv(path: &Path, rows: &BTreeMap<String, Vec<PerImageErrorRow>>, num_classes: usize) -> Result<()> {
    let mut header = vec!["domain".to_string(), "sample_id".into(), "class".into(), "tp".into()];
    header.extend((0..num_classes).map(|k| format!("fn_{k}")));
    header.push("invalid".into());
    let mut out = Vec::new();
    for (domain, rows) in rows {
        for r in rows {
            let mut row = vec![domain.clone(), r.sample_id.clone(), r.class.to_string(), r.tp.to_string()];
            row.extend((0..num_classes).map(|k| r.fns.get(&k).map(|v| v.to_string()).unwrap_or_default()));
            row.push(r.invalid.to_string());
            out.push(row);
        }
    }
    write_csv_rows(path, &header, &out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Rule sets of every discriminator run as stand-alone JSON.
pub fn rules_json(report: &DiscriminatorReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Writes `report.json`, `series.csv`, `errors.csv` and, when segments were
/// analysed, `segments.csv` and `rules.json`. Returns the written paths.
pub fn write_analysis(out_dir: &Path, analysis: &Analysis) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let bundle = &analysis.bundle;
    let mut written = Vec::new();
    let report = out_dir.join(REPORT_FILE);
    write_text(&report, &bundle.to_json()?)?;
    written.push(report);
    let series = out_dir.join("series.csv");
    write_series_csv(&series, bundle)?;
    written.push(series);
    let errors = out_dir.join("errors.csv");
    write_errors_csv(&errors, &analysis.error_rows, bundle.meta.num_classes)?;
    written.push(errors);
    if let Some(records) = &analysis.records {
        let segments = out_dir.join("segments.csv");
        write_segments_csv(fs::File::create(&segments)?, records)?;
        written.push(segments);
        let rules = out_dir.join("rules.json");
        write_text(&rules, &rules_json(&bundle.discriminator)?)?;
        written.push(rules);
    }
    Ok(written)
}
