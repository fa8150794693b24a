//! Dataset files: 8-bit grayscale PNG label rasters, PRB1 probability
//! rasters, the JSON manifest tying them together and CSV segment tables.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{first_argmax_mismatch, LabelMask, PairedSample, ProbMap, IGNORE_LABEL, MAX_CLASSES};
use crate::segmeta::{Domain, SegmentRecord, FEATURE_NAMES, NUM_FEATURES};

/// Manifest schema version written and accepted by this crate.
pub const MANIFEST_VERSION: u32 = 1;

/// Magic bytes opening every PRB1 file.
pub const PRB1_MAGIC: &[u8; 4] = b"PRB1";

/// Size of the PRB1 header: magic plus three little-endian u32.
pub const PRB1_HEADER_LEN: usize = 16;

/// Paths of one sample's rasters, relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePaths {
    pub gt: String,
    pub pred_real: String,
    pub pred_syn: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob_real: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob_syn: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub sample_id: String,
    pub paths: SamplePaths,
}

/// Index of a paired dataset on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub num_classes: usize,
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default = "default_ignore")]
    pub ignore_label: u8,
    pub samples: Vec<SampleEntry>,
}

fn default_ignore() -> u8 {
    IGNORE_LABEL
}

impl DatasetManifest {
    /// Checks the manifest on its own, without touching raster files.
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported version {} (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        if !(2..=MAX_CLASSES).contains(&self.num_classes) {
            return Err(Error::Manifest(format!(
                "num_classes must be in [2, {MAX_CLASSES}], got {}",
                self.num_classes
            )));
        }
        if (self.ignore_label as usize) < self.num_classes {
            return Err(Error::Manifest(format!(
                "ignore_label {} collides with a class index",
                self.ignore_label
            )));
        }
        if self.samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut seen = BTreeSet::new();
        for entry in &self.samples {
            if entry.sample_id.is_empty() {
                return Err(Error::Manifest("empty sample_id".into()));
            }
            if !seen.insert(entry.sample_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate sample_id `{}`", entry.sample_id)));
            }
        }
        Ok(())
    }

    /// Display name of class `c`, falling back to its index.
    pub fn class_name(&self, c: usize) -> String {
        self.class_names
            .get(c)
            .cloned()
            .unwrap_or_else(|| format!("class_{c}"))
    }
}

/// Reads and validates a manifest file.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn display_name(path: &Path) -> String {
    path.display().to_string()
}

/// Reads an 8-bit grayscale PNG as raw pixel values plus dimensions.
pub fn read_gray_png(path: &Path) -> Result<(u32, u32, Vec<u8>)> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let name = display_name(path);
    let format_err = |detail: String| Error::ImageFormat {
        file: name.clone(),
        detail,
    };
    let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = decoder.read_info().map_err(|e| format_err(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(format_err(format!(
            "expected 8-bit grayscale, found {:?} at {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let mut buf = vec![0; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(|e| format_err(e.to_string()))?;
    buf.truncate(frame.buffer_size());
    Ok((frame.width, frame.height, buf))
}

/// Writes raw pixel values as an 8-bit grayscale PNG.
pub fn write_gray_png(path: &Path, width: u32, height: u32, data: &[u8]) -> Result<()> {
    let name = display_name(path);
    let encode_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::Io(io),
        other => Error::ImageFormat {
            file: name.clone(),
            detail: other.to_string(),
        },
    };
    let mut encoder = png::Encoder::new(BufWriter::new(File::create(path)?), width, height);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(encode_err)?;
    writer.write_image_data(data).map_err(encode_err)?;
    writer.finish().map_err(encode_err)?;
    Ok(())
}

/// Loads a label PNG, mapping `ignore_label` to [`IGNORE_LABEL`].
pub fn read_label_png(path: &Path, num_classes: usize, ignore_label: u8) -> Result<LabelMask> {
    let (width, height, mut data) = read_gray_png(path)?;
    let name = display_name(path);
    for (i, v) in data.iter_mut().enumerate() {
        if *v == ignore_label {
            *v = IGNORE_LABEL;
        } else if *v as usize >= num_classes {
            return Err(Error::InvalidClass {
                file: name,
                x: (i % width as usize) as u32,
                y: (i / width as usize) as u32,
                value: *v,
            });
        }
    }
    LabelMask::new(width, height, num_classes, data).map_err(|e| e.with_file(&name))
}

pub fn write_label_png(path: &Path, mask: &LabelMask) -> Result<()> {
    write_gray_png(path, mask.width(), mask.height(), mask.data())
}

/// Serializes a probability map in the PRB1 layout.
pub fn encode_prb1(prob: &ProbMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(PRB1_HEADER_LEN + 4 * prob.data().len());
    out.extend_from_slice(PRB1_MAGIC);
    out.extend_from_slice(&prob.height().to_le_bytes());
    out.extend_from_slice(&prob.width().to_le_bytes());
    out.extend_from_slice(&(prob.num_classes() as u32).to_le_bytes());
    for p in prob.data() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// Parses PRB1 bytes; `name` labels errors.
pub fn decode_prb1(bytes: &[u8], name: &str) -> Result<ProbMap> {
    let corrupt = |detail: String| Error::Prb1Corrupt {
        file: name.to_string(),
        detail,
    };
    if bytes.len() < PRB1_HEADER_LEN {
        return Err(corrupt(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != PRB1_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (height, width, classes) = (word(0), word(1), word(2));
    let expected = (height as u64)
        .checked_mul(width as u64)
        .and_then(|n| n.checked_mul(classes as u64))
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(PRB1_HEADER_LEN as u64));
    match expected {
        Some(len) if len == bytes.len() as u64 => {}
        _ => {
            return Err(corrupt(format!(
                "header says {height}x{width}x{classes}, file has {} bytes",
                bytes.len()
            )))
        }
    }
    let data = bytes[PRB1_HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    ProbMap::new(width, height, classes as usize, data).map_err(|e| match e {
        Error::Domain(detail) => corrupt(detail),
        other => other.with_file(name),
    })
}

pub fn read_prb1(path: &Path) -> Result<ProbMap> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_prb1(&fs::read(path)?, &display_name(path))
}

pub fn write_prb1(path: &Path, prob: &ProbMap) -> Result<()> {
    fs::write(path, encode_prb1(prob))?;
    Ok(())
}

/// A dataset read from disk, plus anything suspicious that did not stop the
/// load.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<PairedSample>,
    pub warnings: Vec<String>,
}

impl LoadedDataset {
    /// True when every sample carries both probability maps.
    pub fn has_probabilities(&self) -> bool {
        self.samples.iter().all(PairedSample::has_probabilities)
    }
}

fn check_dims(name: &str, what: &str, got: (u32, u32, usize), want: (u32, u32, usize)) -> Result<()> {
    if got != want {
        return Err(Error::DimensionMismatch {
            file: name.to_string(),
            detail: format!(
                "{what} is {}x{} with C={}, expected {}x{} with C={}",
                got.0, got.1, got.2, want.0, want.1, want.2
            ),
        });
    }
    Ok(())
}

fn load_sample(base: &Path, manifest: &DatasetManifest, entry: &SampleEntry) -> Result<PairedSample> {
    let c = manifest.num_classes;
    let ignore = manifest.ignore_label;
    let paths = &entry.paths;
    let gt_path = base.join(&paths.gt);
    let gt = read_label_png(&gt_path, c, ignore)?;
    let want = (gt.width(), gt.height(), c);
    let mut preds = Vec::with_capacity(2);
    for rel in [&paths.pred_real, &paths.pred_syn] {
        let path = base.join(rel);
        let pred = read_label_png(&path, c, ignore)?;
        check_dims(&display_name(&path), "prediction", (pred.width(), pred.height(), c), want)?;
        preds.push(pred);
    }
    let pred_syn = preds.pop().unwrap();
    let pred_real = preds.pop().unwrap();
    let mut probs = Vec::with_capacity(2);
    for (rel, pred) in [(&paths.prob_real, &pred_real), (&paths.prob_syn, &pred_syn)] {
        let prob = match rel {
            None => None,
            Some(rel) => {
                let path = base.join(rel);
                let name = display_name(&path);
                let prob = read_prb1(&path)?;
                check_dims(
                    &name,
                    "probability map",
                    (prob.width(), prob.height(), prob.num_classes()),
                    want,
                )?;
                if let Some(idx) = first_argmax_mismatch(&prob, pred) {
                    return Err(Error::ArgmaxMismatch {
                        file: name,
                        x: (idx % pred.width() as usize) as u32,
                        y: (idx / pred.width() as usize) as u32,
                    });
                }
                Some(prob)
            }
        };
        probs.push(prob);
    }
    let prob_syn = probs.pop().unwrap();
    let prob_real = probs.pop().unwrap();
    Ok(PairedSample {
        sample_id: entry.sample_id.clone(),
        gt,
        pred_real,
        pred_syn,
        prob_real,
        prob_syn,
    })
}

/// Loads and validates every raster a manifest references.
///
/// Samples are loaded in parallel; the reported error, if any, is the one of
/// the first failing sample in manifest order.
pub fn load_dataset(manifest_path: &Path) -> Result<LoadedDataset> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let loaded: Vec<Result<PairedSample>> = manifest
        .samples
        .par_iter()
        .map(|entry| load_sample(base, &manifest, entry))
        .collect();
    let samples = loaded.into_iter().collect::<Result<Vec<_>>>()?;

    let mut warnings = Vec::new();
    if !manifest.class_names.is_empty() && manifest.class_names.len() != manifest.num_classes {
        warnings.push(format!(
            "manifest lists {} class names for {} classes",
            manifest.class_names.len(),
            manifest.num_classes
        ));
    }
    for s in &samples {
        if s.prob_real.is_some() != s.prob_syn.is_some() {
            warnings.push(format!(
                "sample `{}` has a probability map for one domain only",
                s.sample_id
            ));
        }
    }
    let with_probs = samples.iter().filter(|s| s.has_probabilities()).count();
    if with_probs > 0 && with_probs < samples.len() {
        warnings.push(format!(
            "{with_probs} of {} samples carry probability maps; segment analysis needs all of them",
            samples.len()
        ));
    }
    Ok(LoadedDataset {
        manifest,
        samples,
        warnings,
    })
}

/// Writes samples as PNG/PRB1 files under `dir` plus `dir/manifest.json`.
///
/// Returns the manifest path. Output bytes depend only on the samples.
pub fn write_dataset(dir: &Path, samples: &[PairedSample], class_names: &[String]) -> Result<PathBuf> {
    let first = samples.first().ok_or(Error::EmptyDataset)?;
    let num_classes = first.num_classes();
    for sub in ["gt", "pred_real", "pred_syn"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let with_probs = samples.iter().any(|s| s.prob_real.is_some() || s.prob_syn.is_some());
    if with_probs {
        fs::create_dir_all(dir.join("prob_real"))?;
        fs::create_dir_all(dir.join("prob_syn"))?;
    }
    let entries = samples
        .par_iter()
        .map(|s| {
            s.validate()?;
            if s.num_classes() != num_classes {
                return Err(Error::Congruence(format!(
                    "sample `{}` has C={}, expected {num_classes}",
                    s.sample_id,
                    s.num_classes()
                )));
            }
            let id = &s.sample_id;
            let paths = SamplePaths {
                gt: format!("gt/{id}.png"),
                pred_real: format!("pred_real/{id}.png"),
                pred_syn: format!("pred_syn/{id}.png"),
                prob_real: s.prob_real.as_ref().map(|_| format!("prob_real/{id}.prb")),
                prob_syn: s.prob_syn.as_ref().map(|_| format!("prob_syn/{id}.prb")),
            };
            write_label_png(&dir.join(&paths.gt), &s.gt)?;
            write_label_png(&dir.join(&paths.pred_real), &s.pred_real)?;
            write_label_png(&dir.join(&paths.pred_syn), &s.pred_syn)?;
            if let (Some(p), Some(rel)) = (&s.prob_real, &paths.prob_real) {
                write_prb1(&dir.join(rel), p)?;
            }
            if let (Some(p), Some(rel)) = (&s.prob_syn, &paths.prob_syn) {
                write_prb1(&dir.join(rel), p)?;
            }
            Ok(SampleEntry {
                sample_id: id.clone(),
                paths,
            })
        })
        .collect::<Vec<Result<SampleEntry>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        num_classes,
        class_names: class_names.to_vec(),
        ignore_label: IGNORE_LABEL,
        samples: entries,
    };
    manifest.validate()?;
    let path = dir.join("manifest.json");
    write_manifest(&path, &manifest)?;
    Ok(path)
}

/// Header of segment tables: feature names, then record metadata.
pub fn segment_csv_header() -> Vec<&'static str> {
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.extend(["image_id", "segment_index", "domain", "class", "segment_iou", "is_error"]);
    header
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidConfig(format!("csv: {other:?}")),
    }
}

/// Writes one row per segment record.
pub fn write_segments_csv<W: Write>(out: W, records: &[SegmentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(segment_csv_header()).map_err(csv_err)?;
    for r in records {
        let mut row: Vec<String> = r.features.iter().map(|v| v.to_string()).collect();
        row.push(r.image_id.clone());
        row.push(r.segment_index.to_string());
        row.push(r.domain.to_string());
        row.push(r.class.to_string());
        row.push(r.segment_iou.to_string());
        row.push(r.is_error.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a table written by [`write_segments_csv`].
pub fn read_segments_csv(path: &Path) -> Result<Vec<SegmentRecord>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let name = display_name(path);
    let bad = |line: usize, detail: String| Error::Manifest(format!("{name}, record {line}: {detail}"));
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if header != segment_csv_header() {
        return Err(bad(0, "unexpected header".into()));
    }
    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|e| bad(line + 1, format!("column {}: {e}", header[i])))
        };
        let features = (0..NUM_FEATURES).map(num).collect::<Result<Vec<_>>>()?;
        let m = NUM_FEATURES;
        let parse_usize = |i: usize| -> Result<usize> {
            row[i]
                .parse::<usize>()
                .map_err(|e| bad(line + 1, format!("column {}: {e}", header[i])))
        };
        records.push(SegmentRecord {
            image_id: row[m].to_string(),
            segment_index: parse_usize(m + 1)?,
            domain: row[m + 2].parse::<Domain>()?,
            class: parse_usize(m + 3)?,
            features,
            segment_iou: num(m + 4)?,
            is_error: row[m + 5]
                .parse::<bool>()
                .map_err(|e| bad(line + 1, format!("column is_error: {e}")))?,
        });
    }
    Ok(records)
}
