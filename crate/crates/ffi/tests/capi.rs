use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use segtransfer_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn cpath(p: &Path) -> CString {
    c(p.to_str().unwrap())
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(st_last_error_message()) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { st_string_free(p) };
    s
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(st_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn simgen_load_analyze_render() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    unsafe {
        let cfg = st_config_default();
        assert_eq!(st_config_set_seed(cfg, 11), StStatus::Ok);
        assert_eq!(st_simgen(cfg, 16, 1.0, false, cpath(&data).as_ptr()), StStatus::Ok);

        let mut ds = ptr::null_mut();
        assert_eq!(st_dataset_load(cpath(&data.join("manifest.json")).as_ptr(), &mut ds), StStatus::Ok);
        assert_eq!(st_dataset_len(ds), 16);
        assert_eq!(st_dataset_num_classes(ds), 5);
        assert_eq!(st_dataset_warning_count(ds), 0);

        let mut report = ptr::null_mut();
        assert_eq!(st_analyze(ds, cfg, &mut report), StStatus::Ok);
        let mut r = f64::NAN;
        assert_eq!(st_report_miou_correlation(report, &mut r), StStatus::Ok);
        assert!((-1.0..=1.0).contains(&r));
        let mut acc = f64::NAN;
        assert_eq!(st_report_mean_accuracy(report, false, &mut acc), StStatus::Ok);
        assert!((0.0..=1.0).contains(&acc));

        let mut json = ptr::null_mut();
        assert_eq!(st_report_to_json(report, &mut json), StStatus::Ok);
        let json = take_string(json);
        let bundle = segtransfer::report::ReportBundle::from_json(&json).unwrap();
        assert_eq!(bundle.meta.seed, 11);

        let out = tmp.path().join("out");
        assert_eq!(st_report_write(report, cpath(&out).as_ptr()), StStatus::Ok);
        assert_eq!(std::fs::read_to_string(out.join("report.json")).unwrap(), json);

        let mut svg = ptr::null_mut();
        assert_eq!(st_render_svg(report, StPlotKind::Radar, 1, &mut svg), StStatus::Ok);
        assert!(take_string(svg).starts_with("<svg"));
        assert_eq!(st_render_svg(report, StPlotKind::Radar, -1, &mut svg), StStatus::Usage);
        assert!(svg.is_null());
        assert_eq!(st_render_svg(report, StPlotKind::Scatter, -1, &mut svg), StStatus::Ok);
        st_string_free(svg);

        st_report_free(report);
        st_dataset_free(ds);
        st_config_free(cfg);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let tmp = tempfile::tempdir().unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        let missing = cpath(&tmp.path().join("nope.json"));
        assert_eq!(st_dataset_load(missing.as_ptr(), &mut ds), StStatus::MissingFile);
        assert!(ds.is_null());
        assert!(last_error().contains("nope.json"));

        assert_eq!(st_dataset_load(ptr::null(), &mut ds), StStatus::NullPointer);
        let bad_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(st_dataset_load(bad_utf8.as_ptr().cast(), &mut ds), StStatus::InvalidUtf8);

        let ini = tmp.path().join("bad.ini");
        std::fs::write(&ini, "[rules]\nmax_dept = 3\n").unwrap();
        let mut cfg = ptr::null_mut();
        assert_eq!(st_config_load(cpath(&ini).as_ptr(), &mut cfg), StStatus::InvalidConfig);
        assert!(cfg.is_null());
        assert!(last_error().contains("max_dept"));

        assert_eq!(st_simgen(ptr::null(), 0, 0.0, false, cpath(tmp.path()).as_ptr()), StStatus::InvalidConfig);

        st_dataset_free(ptr::null_mut());
        st_config_free(ptr::null_mut());
        st_report_free(ptr::null_mut());
        st_string_free(ptr::null_mut());
        assert_eq!(st_dataset_len(ptr::null()), 0);
    }
}

#[test]
fn raster_metrics_match_hand_counts() {
    // gt:   0 0 1 1      pred: 0 1 1 1
    //       2 2 1 255          2 0 1 1
    let gt = [0u8, 0, 1, 1, 2, 2, 1, 255];
    let pred = [0u8, 1, 1, 1, 2, 0, 1, 1];
    unsafe {
        let mut counts = [0u64; 9];
        assert_eq!(st_confusion(pred.as_ptr(), gt.as_ptr(), 4, 2, 3, counts.as_mut_ptr()), StStatus::Ok);
        assert_eq!(counts, [1, 1, 0, 0, 3, 0, 1, 0, 1]);

        let (mut iou, mut defined) = (f64::NAN, false);
        assert_eq!(st_iou_class(pred.as_ptr(), gt.as_ptr(), 4, 2, 3, 1, &mut iou, &mut defined), StStatus::Ok);
        assert!(defined);
        assert!((iou - 0.75).abs() < 1e-12);

        let mut miou = f64::NAN;
        assert_eq!(st_miou_image(pred.as_ptr(), gt.as_ptr(), 4, 2, 3, &mut miou), StStatus::Ok);
        assert!((miou - (1.0 / 3.0 + 0.75 + 0.5) / 3.0).abs() < 1e-12);

        let bad = [0u8, 7, 1, 1, 2, 2, 1, 1];
        assert_ne!(st_miou_image(bad.as_ptr(), gt.as_ptr(), 4, 2, 3, &mut miou), StStatus::Ok);

        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 4.0, 6.0, 8.5];
        let mut r = f64::NAN;
        assert_eq!(st_pearson(xs.as_ptr(), ys.as_ptr(), 4, &mut r), StStatus::Ok);
        assert!(r > 0.99 && r <= 1.0);
        let flat = [1.0; 4];
        assert_eq!(st_pearson(xs.as_ptr(), flat.as_ptr(), 4, &mut r), StStatus::UndefinedCorrelation);
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/segtransfer.h")
}

fn compiler() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|cc| Command::new(cc).arg("--version").output().is_ok())
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    let src = include_str!("../src/lib.rs");
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 20);
    for name in exports {
        assert!(text.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(text.contains("ST_STATUS_PRB1_CORRUPT = 33"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let include = header().parent().unwrap().to_path_buf();
    for lang in ["c", "c++"] {
        let status = Command::new(cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(&include)
            .arg(header())
            .status()
            .unwrap();
        assert!(status.success(), "header rejected as {lang}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "segtransfer.h"

int main(int argc, char **argv) {
    char manifest[4096];
    if (argc != 2) return 90;
    if (st_simgen(NULL, 12, 0.5, false, argv[1]) != ST_STATUS_OK) return 91;
    snprintf(manifest, sizeof manifest, "%s/manifest.json", argv[1]);
    st_dataset *ds = NULL;
    if (st_dataset_load(manifest, &ds) != ST_STATUS_OK) return 92;
    st_report *rep = NULL;
    if (st_analyze(ds, NULL, &rep) != ST_STATUS_OK) return 93;
    char *json = NULL;
    if (st_report_to_json(rep, &json) != ST_STATUS_OK) return 94;
    if (strstr(json, "\"correlation\"") == NULL) return 95;
    st_string_free(json);
    if (st_dataset_load("/nonexistent/m.json", &ds) != ST_STATUS_MISSING_FILE) return 96;
    printf("%s|%zu\n", st_last_error_message() != NULL ? "ok" : "null", st_dataset_len(ds));
    st_report_free(rep);
    return 0;
}
"#;

#[test]
fn c_program_links_against_cdylib() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    // integration tests run from target/<profile>/deps; the cdylib sits one level up
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join(format!("{}segtransfer_ffi{}", std::env::consts::DLL_PREFIX, std::env::consts::DLL_SUFFIX));
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = tmp.path().join("main");
    let status = Command::new(cc)
        .arg("-Wall")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg("-o")
        .arg(&bin)
        .arg(format!("-L{}", lib_dir.display()))
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-lsegtransfer_ffi")
        .status()
        .unwrap();
    assert!(status.success(), "C program failed to build");
    let out = Command::new(&bin).arg(tmp.path().join("data")).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "ok|0\n");
}
