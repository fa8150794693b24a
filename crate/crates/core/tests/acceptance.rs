//! Acceptance suite: criteria 1-10, run in order, one PASS/FAIL line each.
//!
//! Lines go straight to the process stdout so they show up even when the
//! test harness captures output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segtransfer::config::AppConfig;
use segtransfer::errordist::per_image_errors;
use segtransfer::io::{decode_prb1, encode_prb1, load_dataset, read_prb1, write_dataset, write_prb1};
use segtransfer::paircorr::pearson;
use segtransfer::report::{analyze, write_analysis, ReportBundle, REPORT_FILE};
use segtransfer::rulekit::{run_discriminator, RuleConfig, Variant};
use segtransfer::segmeta::{dataset_records, SegmentIouMode};
use segtransfer::shiftsim::{gen_paired_dataset, SceneConfig, ShiftConfig};
use segtransfer::{confusion, iou_class, miou_image, Error, LabelMask, NUM_FEATURES};

type Outcome = Result<String, String>;

const SEEDS: u64 = 5;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s(e: Error) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- oracles

/// Brute-force confusion counts; column `c` holds ignore-predicted pixels.
struct PixelOracle {
    counts: Vec<Vec<u64>>,
}

impl PixelOracle {
    fn new(pred: &[u8], gt: &[u8], w: usize, h: usize, c: usize) -> Self {
        let mut counts = vec![vec![0u64; c + 1]; c];
        for y in 0..h {
            for x in 0..w {
                let g = gt[y * w + x];
                let p = pred[y * w + x];
                if g == 255 {
                    continue;
                }
                let col = if p == 255 { c } else { p as usize };
                counts[g as usize][col] += 1;
            }
        }
        Self { counts }
    }

    fn iou(&self, pred: &[u8], gt: &[u8], k: usize) -> Option<f64> {
        let (mut inter, mut union) = (0u64, 0u64);
        for (&p, &g) in pred.iter().zip(gt) {
            if g == 255 {
                continue;
            }
            let (pk, gk) = (p as usize == k, g as usize == k);
            inter += u64::from(pk && gk);
            union += u64::from(pk || gk);
        }
        (union > 0).then(|| inter as f64 / union as f64)
    }
}

fn random_mask(rng: &mut ChaCha8Rng, n: usize, c: u8, ignore_rate: f64) -> Vec<u8> {
    (0..n)
        .map(|_| {
            if rng.gen_bool(ignore_rate) {
                255
            } else {
                rng.gen_range(0..c)
            }
        })
        .collect()
}

/// Textbook computational formula, deliberately different from the
/// library's centred two-pass form.
fn pearson_textbook(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("pool")
        .install(f)
}

fn scene(seed: u64) -> SceneConfig {
    SceneConfig {
        seed,
        ..SceneConfig::default()
    }
}

// ---------------------------------------------------------------- C1

fn png_bytes(w: u32, h: u32, data: &[u8]) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut enc = png::Encoder::new(&mut buf, w, h);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().unwrap();
    writer.write_image_data(data).unwrap();
    writer.finish().unwrap();
    buf
}

/// PRB1 written byte by byte, independently of the library encoder.
fn prb1_bytes(w: u32, h: u32, c: u32, probs: &[f32]) -> Vec<u8> {
    let mut out = b"PRB1".to_vec();
    for v in [h, w, c] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in probs {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

fn soft(labels: &[u8], c: usize) -> Vec<f32> {
    labels
        .iter()
        .flat_map(|&l| (0..c).map(move |k| if k == l as usize { 0.75 } else { 0.25 / (c - 1) as f32 }))
        .collect()
}

fn criterion_1() -> Outcome {
    // An "exported" dataset as another tool would write it: its own
    // directory layout, ignore stored as 250, one-hot-ish ProbMaps.
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let (w, h, c) = (6u32, 4u32, 3usize);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut raw = Vec::new();
    let mut entries = Vec::new();
    for i in 0..12 {
        let mut gt = random_mask(&mut rng, (w * h) as usize, c as u8, 0.0);
        gt[0] = 250;
        let real = random_mask(&mut rng, (w * h) as usize, c as u8, 0.0);
        let syn: Vec<u8> = real.iter().map(|&v| if rng.gen_bool(0.2) { (v + 1) % c as u8 } else { v }).collect();
        let stem = format!("frame{i:03}");
        fs::create_dir_all(dir.join("export")).unwrap();
        for (suffix, data) in [("label", &gt), ("cityscapes", &real), ("carla", &syn)] {
            fs::write(dir.join(format!("export/{stem}_{suffix}.png")), png_bytes(w, h, data)).unwrap();
        }
        for (suffix, data) in [("cityscapes", &real), ("carla", &syn)] {
            fs::write(dir.join(format!("export/{stem}_{suffix}.prb")), prb1_bytes(w, h, c as u32, &soft(data, c))).unwrap();
        }
        entries.push(format!(
            r#"{{"sample_id":"{stem}","paths":{{"gt":"export/{stem}_label.png","pred_real":"export/{stem}_cityscapes.png","pred_syn":"export/{stem}_carla.png","prob_real":"export/{stem}_cityscapes.prb","prob_syn":"export/{stem}_carla.prb"}}}}"#
        ));
        raw.push((gt, real, syn));
    }
    let manifest = format!(
        r#"{{"version":1,"num_classes":3,"class_names":["road","car","person"],"ignore_label":250,"samples":[{}]}}"#,
        entries.join(",")
    );
    fs::write(dir.join("dataset.json"), manifest).unwrap();

    let loaded = load_dataset(&dir.join("dataset.json")).map_err(e2s)?;
    ensure(loaded.warnings.is_empty(), || format!("warnings {:?}", loaded.warnings))?;
    for (s, (gt, real, syn)) in loaded.samples.iter().zip(&raw) {
        let gt_expected: Vec<u8> = gt.iter().map(|&v| if v == 250 { 255 } else { v }).collect();
        ensure(s.gt.data() == gt_expected.as_slice(), || format!("{} gt altered", s.sample_id))?;
        ensure(s.pred_real.data() == real.as_slice(), || format!("{} pred_real altered", s.sample_id))?;
        ensure(s.pred_syn.data() == syn.as_slice(), || format!("{} pred_syn altered", s.sample_id))?;
        let probs = s.prob_syn.as_ref().unwrap().data();
        ensure(probs == soft(syn, c).as_slice(), || format!("{} probabilities altered", s.sample_id))?;
    }
    let analysis = analyze(&loaded, &AppConfig::default()).map_err(e2s)?;
    let series = &analysis.bundle.correlation.miou_series;
    for (i, (gt, real, _)) in raw.iter().enumerate() {
        let gt: Vec<u8> = gt.iter().map(|&v| if v == 250 { 255 } else { v }).collect();
        let oracle = PixelOracle::new(real, &gt, w as usize, h as usize, c);
        let ious: Vec<f64> = (0..c).filter_map(|k| oracle.iou(real, &gt, k)).collect();
        let expected = ious.iter().sum::<f64>() / ious.len() as f64;
        let got = series.values_real[i].unwrap();
        ensure((got - expected).abs() < 1e-12, || format!("sample {i}: mIoU {got} vs oracle {expected}"))?;
    }
    Ok(format!(
        "reference figures need externally trained models and are not reproduced; \
         externally written 12-sample dataset loaded bit-unchanged and analysed (mIoU r = {:?})",
        analysis.bundle.correlation.miou_correlation.value()
    ))
}

// ---------------------------------------------------------------- C2

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let (w, h, c) = (16usize, 16usize, 5usize);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checks = 0u64;
    for i in 0..1000 {
        let gt_raw = random_mask(&mut rng, w * h, c as u8, 0.05);
        let pred_raw = random_mask(&mut rng, w * h, c as u8, 0.05);
        let gt = LabelMask::new(w as u32, h as u32, c, gt_raw.clone()).map_err(e2s)?;
        let pred = LabelMask::new(w as u32, h as u32, c, pred_raw.clone()).map_err(e2s)?;
        let oracle = PixelOracle::new(&pred_raw, &gt_raw, w, h, c);
        let cm = confusion(&pred, &gt).map_err(e2s)?;
        let mut defined = Vec::new();
        for g in 0..c {
            for k in 0..c {
                ensure(cm.get(g, k) == oracle.counts[g][k], || format!("mask {i}: count ({g},{k})"))?;
            }
            ensure(cm.pred_ignored(g) == oracle.counts[g][c], || format!("mask {i}: ignored row {g}"))?;
            let got = iou_class(&pred, &gt, g).map_err(e2s)?;
            let want = oracle.iou(&pred_raw, &gt_raw, g);
            match (got, want) {
                (Some(a), Some(b)) => ensure((a - b).abs() <= 1e-12, || format!("mask {i}: IoU {g} {a} vs {b}"))?,
                (None, None) => {}
                _ => return Err(format!("mask {i}: IoU {g} definedness {got:?} vs {want:?}")),
            }
            defined.extend(want);
            let row = per_image_errors("m", &pred, &gt, g).map_err(e2s)?;
            let total: u64 = oracle.counts[g].iter().sum();
            match row {
                None => ensure(total == 0, || format!("mask {i}: missing error row {g}"))?,
                Some(row) => {
                    let t = total as f64;
                    ensure((row.tp - oracle.counts[g][g] as f64 / t).abs() <= 1e-12, || format!("mask {i}: tp {g}"))?;
                    for k in (0..c).filter(|&k| k != g) {
                        let want = oracle.counts[g][k] as f64 / t;
                        ensure((row.fns[&k] - want).abs() <= 1e-12, || format!("mask {i}: fn {g}->{k}"))?;
                    }
                }
            }
            checks += 1;
        }
        let want = defined.iter().sum::<f64>() / defined.len() as f64;
        let got = miou_image(&pred, &gt).map_err(e2s)?;
        ensure((got - want).abs() <= 1e-12, || format!("mask {i}: mIoU {got} vs {want}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 masks, {checks} class checks match the pixel oracle in {elapsed:.2?} (< 5 s)"))
}

// ---------------------------------------------------------------- C3

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rows = 0usize;
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let c = rng.gen_range(2..=8usize);
        let (w, h) = (rng.gen_range(1..=24u32), rng.gen_range(1..=24u32));
        let n = (w * h) as usize;
        let gt = LabelMask::new(w, h, c, random_mask(&mut rng, n, c as u8, 0.1)).map_err(e2s)?;
        let pred = LabelMask::new(w, h, c, random_mask(&mut rng, n, c as u8, 0.0)).map_err(e2s)?;
        for k in 0..c {
            if let Some(row) = per_image_errors("p", &pred, &gt, k).map_err(e2s)? {
                let sum = row.tp + row.fns.values().sum::<f64>();
                worst = worst.max((sum - 1.0).abs());
                ensure((sum - 1.0).abs() <= 1e-9, || format!("pair {i} class {k}: sum {sum}"))?;
                rows += 1;
            }
        }
    }
    Ok(format!("{rows} non-empty class rows over 1000 pairs, max |TP + sum FN - 1| = {worst:e}"))
}

// ---------------------------------------------------------------- C4

fn criterion_4() -> Outcome {
    let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).map_err(e2s)?;
    ensure((r - 0.5).abs() <= 1e-12, || format!("(1,2,3)/(1,3,2) gave {r}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let xs: Vec<f64> = (0..50).map(|_| rng.gen::<f64>()).collect();
        let mix = rng.gen_range(-1.0..1.0);
        let ys: Vec<f64> = xs.iter().map(|x| mix * x + rng.gen::<f64>()).collect();
        let a = pearson(&xs, &ys).map_err(e2s)?;
        let b = pearson_textbook(&xs, &ys);
        worst = worst.max((a - b).abs());
        ensure((a - b).abs() <= 1e-10, || format!("vector pair {i}: {a} vs {b}"))?;
    }
    Ok(format!("closed form 0.5 reproduced; 100 random length-50 pairs, max deviation from textbook formula {worst:e}"))
}

// ---------------------------------------------------------------- C5-C7

/// Accuracy, majority baseline and row count of one seed.
type SeedRun = (f64, f64, usize);

#[derive(Default)]
struct Sweep {
    runs: BTreeMap<(usize, Variant), Vec<SeedRun>>,
    images: usize,
    segments_per_class: Vec<usize>,
}

impl Sweep {
    fn mean_accuracy(&self, variant: Variant) -> f64 {
        let accs: Vec<f64> = self
            .runs
            .iter()
            .filter(|((_, v), _)| *v == variant)
            .flat_map(|(_, r)| r.iter().map(|x| x.0))
            .collect();
        accs.iter().sum::<f64>() / accs.len() as f64
    }
}

fn sweep(delta: f64, images: usize) -> Result<Sweep, String> {
    let mut out = Sweep {
        images,
        ..Sweep::default()
    };
    let base = SceneConfig::default();
    out.segments_per_class = vec![usize::MAX; base.num_classes];
    for seed in 0..SEEDS {
        let shift = ShiftConfig::with_defaults(base.num_classes, delta);
        let data = gen_paired_dataset(&scene(seed), &shift, images).map_err(e2s)?;
        let records = dataset_records(&data, SegmentIouMode::Adjusted).map_err(e2s)?;
        for class in 0..base.num_classes {
            let n = records.iter().filter(|r| r.class == class).count();
            out.segments_per_class[class] = out.segments_per_class[class].min(n);
        }
        let config = RuleConfig {
            seed,
            ..RuleConfig::default()
        };
        for variant in [Variant::AllSegments, Variant::ErrorsOnly] {
            for class in 0..base.num_classes {
                match run_discriminator(&records, class, variant, &config) {
                    Ok(r) => out.runs.entry((class, variant)).or_default().push((
                        r.test_accuracy,
                        r.majority_baseline,
                        r.real_count + r.synthetic_count,
                    )),
                    Err(Error::DegenerateData(_)) => {}
                    Err(e) => return Err(e.to_string()),
                }
            }
        }
    }
    Ok(out)
}

const NULL_IMAGES: usize = 500;
const SHIFT_IMAGES: usize = 200;

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let s = single_threaded(|| sweep(0.0, NULL_IMAGES))?;
    let elapsed = start.elapsed();
    let min_segments = *s.segments_per_class.iter().min().unwrap();
    ensure(s.images >= 200, || "too few images".into())?;
    ensure(min_segments >= 2000, || format!("only {min_segments} segments in the sparsest class"))?;
    let mut checked = Vec::new();
    for ((class, variant), runs) in &s.runs {
        let rows = runs.iter().map(|r| r.2).min().unwrap();
        if runs.len() < SEEDS as usize || rows < 2000 {
            continue;
        }
        let acc = runs.iter().map(|r| r.0).sum::<f64>() / runs.len() as f64;
        let base = runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64;
        ensure((0.45..=0.55).contains(&acc), || {
            format!("class {class} {}: mean accuracy {acc:.4} outside [0.45, 0.55]", variant.as_str())
        })?;
        checked.push(format!("{class}/{}:{acc:.3}/{base:.3}", variant.as_str()));
    }
    ensure(!checked.is_empty(), || "no class had sufficient data".into())?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?} single-threaded"))?;
    Ok(format!(
        "delta 0, {NULL_IMAGES} images x {SEEDS} seeds, >= {min_segments} segments/class; mean accuracy/baseline per class/variant [{}]; {elapsed:.1?} single-threaded",
        checked.join(" ")
    ))
}

fn criteria_6_7() -> (Outcome, Outcome) {
    let mut means = Vec::new();
    let mut at_half = None;
    for delta in [0.0, 0.25, 0.5, 1.0] {
        match sweep(delta, SHIFT_IMAGES) {
            Ok(s) => {
                let all = s.mean_accuracy(Variant::AllSegments);
                if delta == 0.5 {
                    at_half = Some((all, s.mean_accuracy(Variant::ErrorsOnly)));
                }
                means.push((delta, all));
            }
            Err(e) => return (Err(e.clone()), Err(e)),
        }
    }
    let listing = means
        .iter()
        .map(|(d, a)| format!("{d}: {a:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    let c6 = (|| {
        for pair in means.windows(2) {
            ensure(pair[1].1 >= pair[0].1 - 0.03, || {
                format!("accuracy drops from {:.4} at {} to {:.4} at {} ({listing})", pair[0].1, pair[0].0, pair[1].1, pair[1].0)
            })?;
        }
        let top = means.last().unwrap().1;
        ensure(top >= 0.80, || format!("accuracy {top:.4} at delta 1 below 0.80 ({listing})"))?;
        Ok(format!("mean accuracy by delta {{{listing}}}, non-decreasing within 0.03, >= 0.80 at 1"))
    })();
    let c7 = match at_half {
        None => Err("no delta 0.5 run".to_string()),
        Some((all, errors)) => ensure(errors >= all - 0.02, || {
            format!("errors-only {errors:.4} < all-segments {all:.4} - 0.02")
        })
        .map(|_| format!("delta 0.5: errors-only {errors:.4} vs all segments {all:.4} (>= all - 0.02)")),
    };
    (c6, c7)
}

// ---------------------------------------------------------------- C8-C10

fn simgen_dir(dir: &Path, delta: f64, shared: bool, n: usize, seed: u64) -> Result<std::path::PathBuf, String> {
    let sc = SceneConfig {
        width: 48,
        height: 48,
        seed,
        ..SceneConfig::default()
    };
    let mut shift = ShiftConfig::with_defaults(sc.num_classes, delta);
    shift.shared_realization = shared;
    let samples = gen_paired_dataset(&sc, &shift, n).map_err(e2s)?;
    let names: Vec<String> = (0..sc.num_classes).map(|c| format!("class_{c}")).collect();
    write_dataset(dir, &samples, &names).map_err(e2s)
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = simgen_dir(tmp.path(), 1.0, true, 60, 8)?;
    let dataset = load_dataset(&manifest).map_err(e2s)?;
    let bundle = analyze(&dataset, &AppConfig::default()).map_err(e2s)?.bundle;
    let r = bundle.correlation.miou_correlation.value();
    ensure(r == Some(1.0), || format!("mIoU correlation {r:?}"))?;
    let mut compared = 0;
    for e in &bundle.errors {
        let (Some(a), Some(b)) = (e.profiles.get("real"), e.profiles.get("synthetic")) else {
            continue;
        };
        ensure(a.contributing_images == b.contributing_images, || format!("class {} image counts", e.class))?;
        ensure((a.tps - b.tps).abs() <= 1e-12, || format!("class {} TPS differ", e.class))?;
        for (k, v) in &a.fns {
            ensure((v - b.fns[k]).abs() <= 1e-12, || format!("class {} FNS {k} differ", e.class))?;
        }
        compared += 1;
    }
    ensure(compared > 0, || "no class profiles to compare".into())?;
    Ok(format!("shared realization: mIoU r = 1.0 exactly; {compared} class profiles identical"))
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = simgen_dir(&tmp.path().join("data"), 0.5, false, 40, 9)?;
    let dataset = load_dataset(&manifest).map_err(e2s)?;
    let records = dataset_records(&dataset.samples, SegmentIouMode::Adjusted).map_err(e2s)?;
    ensure(!records.is_empty(), || "no segments".into())?;
    let bad = records.iter().filter(|r| r.features.len() != NUM_FEATURES || r.features.iter().any(|v| !v.is_finite())).count();
    ensure(NUM_FEATURES == 35 && bad == 0, || format!("{bad} records without 35 finite features"))?;
    let mut cfg = AppConfig::default();
    cfg.set_seed(17);
    let mut reports = Vec::new();
    for (i, threads) in [0usize, 1, 3].into_iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let analysis = if threads == 0 {
            analyze(&dataset, &cfg).map_err(e2s)?
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| analyze(&dataset, &cfg))
                .map_err(e2s)?
        };
        write_analysis(&out, &analysis).map_err(e2s)?;
        reports.push(fs::read(out.join(REPORT_FILE)).map_err(|e| e.to_string())?);
    }
    ensure(reports.windows(2).all(|w| w[0] == w[1]), || "report JSON differs between runs".into())?;
    Ok(format!(
        "{} records x 35 finite features; 3 analyze runs (default, 1 and 3 threads) byte-identical ({} bytes)",
        records.len(),
        reports[0].len()
    ))
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = simgen_dir(&tmp.path().join("data"), 0.25, false, 10, 10)?;
    let dataset = load_dataset(&manifest).map_err(e2s)?;
    ensure(dataset.warnings.is_empty(), || format!("warnings: {:?}", dataset.warnings))?;

    let prob = dataset.samples[3].prob_real.clone().unwrap();
    let bytes = encode_prb1(&prob);
    let path = tmp.path().join("copy.prb");
    write_prb1(&path, &decode_prb1(&bytes, "mem").map_err(e2s)?).map_err(e2s)?;
    let reread = read_prb1(&path).map_err(e2s)?;
    ensure(fs::read(&path).unwrap() == bytes && reread == prob, || "PRB1 round trip changed bytes".into())?;

    let json = analyze(&dataset, &AppConfig::default()).map_err(e2s)?.bundle.to_json().map_err(e2s)?;
    let again = ReportBundle::from_json(&json).map_err(e2s)?.to_json().map_err(e2s)?;
    ensure(json == again, || "report JSON not byte-stable".into())?;

    let truncated = tmp.path().join("data/prob_syn/sample_00004.prb");
    let mut b = fs::read(&truncated).unwrap();
    b.pop();
    fs::write(&truncated, b).unwrap();
    match load_dataset(&manifest) {
        Err(Error::Prb1Corrupt { .. }) => {}
        other => return Err(format!("truncated PRB1 not rejected as corrupt: {:?}", other.map(|_| ()))),
    }
    Ok(format!(
        "simgen -> load: 0 warnings; PRB1 ({} bytes) and report JSON ({} bytes) byte-stable; truncated PRB1 rejected",
        bytes.len(),
        json.len()
    ))
}

// ---------------------------------------------------------------- driver

fn run(f: impl FnOnce() -> Outcome) -> Outcome {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn report(id: u32, outcome: &Outcome) {
    let line = match outcome {
        Ok(detail) => format!("acceptance criterion {id:>2}: PASS  {detail}\n"),
        Err(detail) => format!("acceptance criterion {id:>2}: FAIL  {detail}\n"),
    };
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();
    let mut record = |id: u32, outcome: Outcome| {
        report(id, &outcome);
        results.push((id, outcome.is_ok()));
    };
    record(1, run(criterion_1));
    record(2, run(criterion_2));
    record(3, run(criterion_3));
    record(4, run(criterion_4));
    record(5, run(criterion_5));
    let (c6, c7) = panic::catch_unwind(criteria_6_7)
        .unwrap_or_else(|_| (Err("panicked".into()), Err("panicked".into())));
    record(6, c6);
    record(7, c7);
    record(8, run(criterion_8));
    record(9, run(criterion_9));
    record(10, run(criterion_10));
    let failed: Vec<u32> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
