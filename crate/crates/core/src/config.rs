//! INI run configuration with one section per module.
//!
//! Unknown sections and keys are rejected so typos surface early.
//! [`reference_config`] renders every default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::paircorr::{CorrelationConfig, CorrelationMethod, UndefinedPolicy};
use crate::rulekit::RuleConfig;
use crate::segmeta::SegmentIouMode;
use crate::shiftsim::{
    sink_confusion, uniform_confusion, NoiseModel, SceneConfig, ShiftConfig, DEFAULT_SINK_CLASS,
};

/// Everything a run can be configured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime choose.
    pub threads: usize,
    pub correlation: CorrelationConfig,
    pub segment_iou: SegmentIouMode,
    pub rules: RuleConfig,
    pub scene: SceneConfig,
    pub shift: ShiftConfig,
    /// Number of samples `simgen` writes.
    pub simgen_samples: usize,
}

impl Default for AppConfig {
    fn default() -> Self {
        let scene = SceneConfig::default();
        let shift = ShiftConfig::with_defaults(scene.num_classes, 0.0);
        Self {
            seed: 0,
            threads: 0,
            correlation: CorrelationConfig::default(),
            segment_iou: SegmentIouMode::default(),
            rules: RuleConfig::default(),
            scene,
            shift,
            simgen_samples: 200,
        }
    }
}

impl AppConfig {
    /// Sets the master seed everywhere it is consumed.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.rules.seed = seed;
        self.scene.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.correlation.min_pairs < 2 {
            return Err(Error::InvalidConfig("correlation.min_pairs must be at least 2".into()));
        }
        self.rules.validate()?;
        self.scene.validate()?;
        self.shift.validate(self.scene.num_classes)?;
        if self.simgen_samples == 0 {
            return Err(Error::InvalidConfig("simgen.samples must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, as lowercase hex. The thread
    /// count is left out since results do not depend on it.
    pub fn hash(&self) -> String {
        let canonical = AppConfig {
            threads: 0,
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(json)
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses INI text; absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        for (name, props) in ini.iter() {
            let name = name.unwrap_or("").to_string();
            let section = sections.entry(name.clone()).or_insert_with(|| Section {
                name: name.clone(),
                values: BTreeMap::new(),
            });
            for (k, v) in props.iter() {
                section.values.insert(k.to_string(), v.trim().to_string());
            }
        }
        let mut take = |name: &str| {
            sections.remove(name).unwrap_or_else(|| Section {
                name: name.to_string(),
                values: BTreeMap::new(),
            })
        };

        let mut cfg = AppConfig::default();
        let mut run = take("run");
        let seed = run.get("seed", cfg.seed)?;
        cfg.threads = run.get("threads", cfg.threads)?;
        run.finish()?;

        let mut s = take("correlation");
        cfg.correlation.method = match s.raw("method").as_deref() {
            None | Some("pearson") => CorrelationMethod::Pearson,
            Some("spearman") => CorrelationMethod::Spearman,
            Some(other) => return Err(s.invalid("method", other)),
        };
        cfg.correlation.min_pairs = s.get("min_pairs", cfg.correlation.min_pairs)?;
        cfg.correlation.undefined_policy = match s.raw("undefined").as_deref() {
            None | Some("exclude") => UndefinedPolicy::Exclude,
            Some("impute_zero") => UndefinedPolicy::ImputeZero,
            Some(other) => return Err(s.invalid("undefined", other)),
        };
        s.finish()?;

        let mut s = take("segments");
        cfg.segment_iou = match s.raw("iou").as_deref() {
            None | Some("adjusted") => SegmentIouMode::Adjusted,
            Some("full_class") => SegmentIouMode::FullClass,
            Some(other) => return Err(s.invalid("iou", other)),
        };
        s.finish()?;

        let mut s = take("rules");
        let r = &mut cfg.rules;
        r.n_estimators = s.get("n_estimators", r.n_estimators)?;
        r.max_samples = s.get("max_samples", r.max_samples)?;
        r.max_features = s.get("max_features", r.max_features)?;
        r.max_depth = s.get("max_depth", r.max_depth)?;
        r.precision_min = s.get("precision_min", r.precision_min)?;
        r.recall_min = s.get("recall_min", r.recall_min)?;
        r.top_k = s.get("top_k", r.top_k)?;
        r.train_fraction = s.get("train_fraction", r.train_fraction)?;
        s.finish()?;

        let mut s = take("scene");
        let sc = &mut cfg.scene;
        sc.width = s.get("width", sc.width)?;
        sc.height = s.get("height", sc.height)?;
        sc.num_classes = s.get("num_classes", sc.num_classes)?;
        sc.min_shapes = s.get("min_shapes", sc.min_shapes)?;
        sc.max_shapes = s.get("max_shapes", sc.max_shapes)?;
        s.finish()?;
        let c = cfg.scene.num_classes;
        if !(2..=255).contains(&c) {
            return Err(Error::InvalidConfig(format!("scene.num_classes must be in [2, 255], got {c}")));
        }

        let mut base = take("noise.base");
        cfg.shift.base = parse_noise(&mut base, NoiseModel::default_base(c), c)?;
        base.finish()?;
        let mut shifted = take("noise.shifted");
        cfg.shift.shifted = parse_noise(&mut shifted, NoiseModel::default_shifted(c), c)?;
        shifted.finish()?;

        let mut s = take("shift");
        cfg.shift.delta = s.get("delta", cfg.shift.delta)?;
        cfg.shift.shared_realization = s.get("shared_realization", cfg.shift.shared_realization)?;
        s.finish()?;

        let mut s = take("simgen");
        cfg.simgen_samples = s.get("samples", cfg.simgen_samples)?;
        s.finish()?;

        if let Some(name) = sections.keys().find(|k| !k.is_empty()) {
            return Err(Error::InvalidConfig(format!("unknown section [{name}]")));
        }
        if let Some(top) = sections.get("") {
            if let Some(key) = top.values.keys().next() {
                return Err(Error::InvalidConfig(format!("key `{key}` outside any section")));
            }
        }
        cfg.set_seed(seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

struct Section {
    name: String,
    values: BTreeMap<String, String>,
}

impl Section {
    fn raw(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn invalid(&self, key: &str, value: &str) -> Error {
        Error::InvalidConfig(format!("[{}] {key} = `{value}` is not valid", self.name))
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.values.remove(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.invalid(key, &v)),
        }
    }

    fn finish(self) -> Result<()> {
        match self.values.keys().next() {
            None => Ok(()),
            Some(key) => Err(Error::InvalidConfig(format!("unknown key `{key}` in [{}]", self.name))),
        }
    }
}

fn parse_noise(s: &mut Section, default: NoiseModel, num_classes: usize) -> Result<NoiseModel> {
    let mut m = default;
    m.temperature = s.get("temperature", m.temperature)?;
    m.boundary_jitter = s.get("boundary_jitter", m.boundary_jitter)?;
    m.blob_rate = s.get("blob_rate", m.blob_rate)?;
    m.blob_radius_min = s.get("blob_radius_min", m.blob_radius_min)?;
    m.blob_radius_max = s.get("blob_radius_max", m.blob_radius_max)?;
    if let Some(spec) = s.raw("confusion") {
        m.confusion = parse_confusion(&spec, num_classes).map_err(|detail| {
            Error::InvalidConfig(format!("[{}] confusion = `{spec}`: {detail}", s.name))
        })?;
    }
    Ok(m)
}

/// Parses a confusion matrix written as `uniform:STAY`,
/// `uniform:STAY+sink:K:EXTRA`, or explicit rows separated by `|` with
/// entries separated by commas or spaces.
pub fn parse_confusion(spec: &str, num_classes: usize) -> std::result::Result<Vec<Vec<f64>>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
    if let Some(rest) = spec.trim().strip_prefix("uniform:") {
        let (stay, sink) = match rest.split_once('+') {
            None => (rest, None),
            Some((stay, sink)) => (stay, Some(sink)),
        };
        let stay = num(stay)?;
        return match sink {
            None => Ok(uniform_confusion(num_classes, stay)),
            Some(sink) => {
                let parts: Vec<&str> = sink.split(':').collect();
                match parts.as_slice() {
                    ["sink", k, extra] => {
                        let k: usize = k.trim().parse().map_err(|_| format!("`{k}` is not a class"))?;
                        if k >= num_classes {
                            return Err(format!("sink class {k} out of range"));
                        }
                        Ok(sink_confusion(num_classes, stay, k, num(extra)?))
                    }
                    _ => Err("expected `sink:CLASS:EXTRA` after `+`".into()),
                }
            }
        };
    }
    let rows = spec
        .split('|')
        .map(|row| {
            row.split(|ch: char| ch == ',' || ch.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(num)
                .collect::<std::result::Result<Vec<f64>, String>>()
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    if rows.len() != num_classes || rows.iter().any(|r| r.len() != num_classes) {
        return Err(format!("expected {num_classes} rows of {num_classes} entries"));
    }
    Ok(rows)
}

/// Commented INI listing every setting at its default value.
pub fn reference_config() -> String {
    let d = AppConfig::default();
    let b = &d.shift.base;
    let s = &d.shift.shifted;
    let r = &d.rules;
    let sc = &d.scene;
    format!(
        "\
; segtransfer reference configuration. Every key shows its default.

[run]
; Master seed; --seed overrides it.
seed = {seed}
; Worker threads, 0 = one per core; --threads overrides it.
threads = {threads}

[correlation]
; pearson | spearman
method = pearson
; Fewest usable image pairs for a per-class coefficient.
min_pairs = {min_pairs}
; Pairs with one undefined side: exclude | impute_zero
undefined = exclude

[segments]
; Segment IoU against touching ground-truth components (adjusted)
; or against every ground-truth pixel of the class (full_class).
iou = adjusted

[rules]
n_estimators = {n_estimators}
max_samples = {max_samples}
max_features = {max_features}
max_depth = {max_depth}
precision_min = {precision_min}
recall_min = {recall_min}
top_k = {top_k}
train_fraction = {train_fraction}

[scene]
width = {width}
height = {height}
num_classes = {num_classes}
min_shapes = {min_shapes}
max_shapes = {max_shapes}

; Confusion matrices: uniform:STAY, uniform:STAY+sink:CLASS:EXTRA,
; or explicit rows such as `0.9 0.1 | 0.2 0.8`.
[noise.base]
temperature = {bt}
boundary_jitter = {bj}
confusion = uniform:0.995
blob_rate = {bb}
blob_radius_min = {brmin}
blob_radius_max = {brmax}

[noise.shifted]
temperature = {st}
boundary_jitter = {sj}
confusion = uniform:0.985+sink:{sink}:0.01
blob_rate = {sb}
blob_radius_min = {srmin}
blob_radius_max = {srmax}

[shift]
; 0 = same noise model in both channels, 1 = fully shifted, above 1 extrapolates.
delta = {delta}
; Copy the real channel into the synthetic one (pipeline identity checks).
shared_realization = {shared}

[simgen]
samples = {samples}
",
        seed = d.seed,
        threads = d.threads,
        min_pairs = d.correlation.min_pairs,
        n_estimators = r.n_estimators,
        max_samples = r.max_samples,
        max_features = r.max_features,
        max_depth = r.max_depth,
        precision_min = r.precision_min,
        recall_min = r.recall_min,
        top_k = r.top_k,
        train_fraction = r.train_fraction,
        width = sc.width,
        height = sc.height,
        num_classes = sc.num_classes,
        min_shapes = sc.min_shapes,
        max_shapes = sc.max_shapes,
        bt = b.temperature,
        bj = b.boundary_jitter,
        bb = b.blob_rate,
        brmin = b.blob_radius_min,
        brmax = b.blob_radius_max,
        st = s.temperature,
        sj = s.boundary_jitter,
        sink = DEFAULT_SINK_CLASS,
        sb = s.blob_rate,
        srmin = s.blob_radius_min,
        srmax = s.blob_radius_max,
        delta = d.shift.delta,
        shared = d.shift.shared_realization,
        samples = d.simgen_samples,
    )
}
