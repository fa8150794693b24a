//! Static SVG charts drawn from a [`ReportBundle`].
//!
//! Every number a chart shows is printed exactly as the report's JSON
//! prints it, inside `<title>` elements or labels.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::errordist::BoxplotStats;
use crate::paircorr::{Coefficient, ScoreSeries};
use crate::report::ReportBundle;

const SIZE: f64 = 400.0;
const RADAR_RADIUS: f64 = 150.0;
const PLOT_LO: f64 = 60.0;
const PLOT_HI: f64 = 360.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Radar,
    Boxplot,
    Scatter,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "radar" => Ok(PlotKind::Radar),
            "boxplot" => Ok(PlotKind::Boxplot),
            "scatter" => Ok(PlotKind::Scatter),
            other => Err(Error::Usage(format!(
                "unknown plot kind `{other}` (expected radar, boxplot or scatter)"
            ))),
        }
    }
}

/// Number formatted the way the report JSON formats it.
pub fn num(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        SIZE / 2.0,
        escape(title)
    )
}

/// Position of `value` on axis `axis` of a radar with `axes` axes; axis 0
/// points up and the rest follow clockwise.
pub fn radar_vertex(value: f64, axis: usize, axes: usize) -> (f64, f64) {
    let angle = -PI / 2.0 + 2.0 * PI * axis as f64 / axes as f64;
    let r = value * RADAR_RADIUS;
    (SIZE / 2.0 + r * angle.cos(), SIZE / 2.0 + r * angle.sin())
}

fn class_label(bundle: &ReportBundle, c: usize) -> String {
    bundle
        .meta
        .class_names
        .get(c)
        .cloned()
        .unwrap_or_else(|| format!("class_{c}"))
}

fn check_class(bundle: &ReportBundle, class: usize) -> Result<()> {
    if class >= bundle.meta.num_classes {
        return Err(Error::Usage(format!(
            "class {class} not in report (it has {} classes)",
            bundle.meta.num_classes
        )));
    }
    Ok(())
}

/// Radar of TPS (own axis) and FNS (other axes) per domain for `class`.
pub fn radar_svg(bundle: &ReportBundle, class: usize) -> Result<String> {
    check_class(bundle, class)?;
    let chart = bundle
        .class_errors(class)
        .and_then(|e| e.radar.as_ref())
        .ok_or_else(|| Error::Usage(format!("report has no radar data for class {class}")))?;
    let n = chart.axes.len();
    let mut svg = header(&format!("TPS/FNS of {}", class_label(bundle, class)));
    for ring in [0.25, 0.5, 0.75, 1.0] {
        let pts: Vec<String> = (0..n)
            .map(|k| {
                let (x, y) = radar_vertex(ring, k, n);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(svg, "<polygon points=\"{}\" fill=\"none\" stroke=\"#ddd\"/>", pts.join(" "));
    }
    for (k, &axis) in chart.axes.iter().enumerate() {
        let (x, y) = radar_vertex(1.0, k, n);
        let (lx, ly) = radar_vertex(1.12, k, n);
        let _ = writeln!(
            svg,
            "<line x1=\"{c:.3}\" y1=\"{c:.3}\" x2=\"{x:.3}\" y2=\"{y:.3}\" stroke=\"#999\"/>\n\
             <text x=\"{lx:.3}\" y=\"{ly:.3}\" text-anchor=\"middle\">{}</text>",
            escape(&class_label(bundle, axis)),
            c = SIZE / 2.0
        );
    }
    for (i, series) in chart.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = series
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let (x, y) = radar_vertex(v, k, n);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            svg,
            "<g class=\"series\" data-dataset=\"{}\">\n<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"{color}\" stroke-width=\"2\"/>",
            escape(&series.dataset),
            pts.join(" ")
        );
        for (k, &v) in series.values.iter().enumerate() {
            let (x, y) = radar_vertex(v, k, n);
            let _ = writeln!(
                svg,
                "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"3\" fill=\"{color}\"><title>{} {}: {}</title></circle>",
                escape(&series.dataset),
                escape(&class_label(bundle, chart.axes[k])),
                num(v)
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"10\" y=\"{}\" fill=\"{color}\">{} ({} images)</text>\n</g>",
            SIZE - 12.0 - 14.0 * i as f64,
            escape(&series.dataset),
            series.contributing_images
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn scale(v: f64) -> f64 {
    PLOT_HI - v.clamp(0.0, 1.0) * (PLOT_HI - PLOT_LO)
}

fn axes_frame(svg: &mut String, x_label: &str, y_label: &str) {
    let _ = writeln!(
        svg,
        "<rect x=\"{PLOT_LO}\" y=\"{PLOT_LO}\" width=\"{w}\" height=\"{w}\" fill=\"none\" stroke=\"#333\"/>",
        w = PLOT_HI - PLOT_LO
    );
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let p = scale(t);
        let _ = writeln!(
            svg,
            "<text x=\"{:.3}\" y=\"{:.3}\" text-anchor=\"end\">{t}</text>",
            PLOT_LO - 4.0,
            p + 4.0
        );
    }
    if !x_label.is_empty() {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            SIZE / 2.0,
            SIZE - 12.0,
            escape(x_label)
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{c}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {c})\">{}</text>",
        escape(y_label),
        c = SIZE / 2.0
    );
}

/// Text of the correlation annotation.
pub fn coefficient_label(coefficient: &Coefficient) -> String {
    match coefficient {
        Coefficient::Reported { value } => format!("r = {value:.3}"),
        Coefficient::InsufficientSamples => "r = n/a (not enough samples)".into(),
        Coefficient::Undefined => "r = n/a (constant series)".into(),
    }
}

fn scatter_from(bundle: &ReportBundle, title: &str, series: &ScoreSeries, coefficient: &Coefficient) -> String {
    let mut svg = header(title);
    axes_frame(&mut svg, "real", "synthetic");
    let _ = writeln!(
        svg,
        "<line x1=\"{lo}\" y1=\"{hi}\" x2=\"{hi}\" y2=\"{lo}\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>",
        lo = PLOT_LO,
        hi = PLOT_HI
    );
    let (xs, ys) = series.defined_pairs(bundle.correlation.config.undefined_policy);
    for (x, y) in xs.iter().zip(&ys) {
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"0.7\"><title>{}, {}</title></circle>",
            PLOT_LO + x.clamp(0.0, 1.0) * (PLOT_HI - PLOT_LO),
            scale(*y),
            COLORS[0],
            num(*x),
            num(*y)
        );
    }
    let detail = match coefficient {
        Coefficient::Reported { value } => format!("<title>{}</title>", num(*value)),
        _ => String::new(),
    };
    let _ = writeln!(
        svg,
        "<text class=\"annotation\" x=\"{:.3}\" y=\"{:.3}\">{}{detail}</text>",
        PLOT_LO + 8.0,
        PLOT_LO + 16.0,
        coefficient_label(coefficient)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.3}\" y=\"{:.3}\">n = {}</text>",
        PLOT_LO + 8.0,
        PLOT_LO + 30.0,
        xs.len()
    );
    svg.push_str("</svg>\n");
    svg
}

/// Scatter of per-image real vs synthetic scores: mIoU when `class` is
/// `None`, otherwise that class's IoU.
pub fn scatter_svg(bundle: &ReportBundle, class: Option<usize>) -> Result<String> {
    match class {
        None => Ok(scatter_from(
            bundle,
            "per-image mIoU",
            &bundle.correlation.miou_series,
            &bundle.correlation.miou_correlation,
        )),
        Some(c) => {
            check_class(bundle, c)?;
            let series = bundle
                .class_series
                .get(c)
                .ok_or_else(|| Error::Usage(format!("report has no IoU series for class {c}")))?;
            let coefficient = &bundle
                .correlation
                .classes
                .iter()
                .find(|cc| cc.class == c)
                .ok_or_else(|| Error::Usage(format!("report has no correlation for class {c}")))?
                .coefficient;
            Ok(scatter_from(
                bundle,
                &format!("IoU of {}", class_label(bundle, c)),
                series,
                coefficient,
            ))
        }
    }
}

fn draw_box(svg: &mut String, x: f64, width: f64, color: &str, label: &str, b: &BoxplotStats) {
    let mid = x + width / 2.0;
    let (q1, q3) = (scale(b.q1), scale(b.q3));
    let _ = writeln!(
        svg,
        "<g class=\"box\">\n<title>{label}: min {} q1 {} median {} q3 {} max {}</title>\n\
         <line x1=\"{mid:.3}\" y1=\"{:.3}\" x2=\"{mid:.3}\" y2=\"{:.3}\" stroke=\"{color}\"/>\n\
         <line x1=\"{mid:.3}\" y1=\"{:.3}\" x2=\"{mid:.3}\" y2=\"{:.3}\" stroke=\"{color}\"/>\n\
         <rect x=\"{x:.3}\" y=\"{q3:.3}\" width=\"{width:.3}\" height=\"{:.3}\" fill=\"{color}\" fill-opacity=\"0.25\" stroke=\"{color}\"/>\n\
         <line x1=\"{x:.3}\" y1=\"{m:.3}\" x2=\"{:.3}\" y2=\"{m:.3}\" stroke=\"{color}\" stroke-width=\"2\"/>",
        num(b.min),
        num(b.q1),
        num(b.median),
        num(b.q3),
        num(b.max),
        scale(b.whisker_high),
        q3,
        q1,
        scale(b.whisker_low),
        q1 - q3,
        x + width,
        m = scale(b.median)
    );
    for &o in &b.outliers {
        let _ = writeln!(
            svg,
            "<circle cx=\"{mid:.3}\" cy=\"{:.3}\" r=\"2\" fill=\"none\" stroke=\"{color}\"><title>{}</title></circle>",
            scale(o),
            num(o)
        );
    }
    svg.push_str("</g>\n");
}

/// Boxplots of per-image TP and FN fractions of `class`, one box per
/// domain for each axis.
pub fn boxplot_svg(bundle: &ReportBundle, class: usize) -> Result<String> {
    check_class(bundle, class)?;
    let report = bundle
        .class_errors(class)
        .filter(|e| !e.boxplots.is_empty())
        .ok_or_else(|| Error::Usage(format!("report has no boxplot data for class {class}")))?;
    let mut svg = header(&format!("error distribution of {}", class_label(bundle, class)));
    axes_frame(&mut svg, "", "fraction of ground-truth pixels");
    let n = bundle.meta.num_classes;
    let group = (PLOT_HI - PLOT_LO) / n as f64;
    let domains: Vec<&String> = report.boxplots.keys().collect();
    let width = group * 0.8 / domains.len() as f64;
    // axis order matches the radar: the class itself carries TP
    for axis in 0..n {
        let x0 = PLOT_LO + group * axis as f64 + group * 0.1;
        let label = if axis == class {
            "TP".to_string()
        } else {
            format!("FN {}", class_label(bundle, axis))
        };
        let _ = writeln!(
            svg,
            "<text x=\"{:.3}\" y=\"{:.3}\" text-anchor=\"middle\">{}</text>",
            x0 + group * 0.4,
            PLOT_HI + 14.0,
            escape(&label)
        );
        for (i, domain) in domains.iter().enumerate() {
            let boxes = &report.boxplots[*domain];
            let stats = if axis == class { Some(&boxes.tp) } else { boxes.fns.get(&axis) };
            if let Some(stats) = stats {
                draw_box(
                    &mut svg,
                    x0 + width * i as f64,
                    width,
                    COLORS[i % COLORS.len()],
                    &format!("{domain} {label}"),
                    stats,
                );
            }
        }
    }
    for (i, domain) in domains.iter().enumerate() {
        let _ = writeln!(
            svg,
            "<text x=\"{:.3}\" y=\"40\" fill=\"{}\">{}</text>",
            PLOT_LO + 90.0 * i as f64,
            COLORS[i % COLORS.len()],
            escape(domain)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Renders `kind`; radar and boxplot need a class, scatter takes one
/// optionally.
pub fn render(bundle: &ReportBundle, kind: PlotKind, class: Option<usize>) -> Result<String> {
    let need = |class: Option<usize>| class.ok_or_else(|| Error::Usage("this plot kind needs --class".into()));
    match kind {
        PlotKind::Radar => radar_svg(bundle, need(class)?),
        PlotKind::Boxplot => boxplot_svg(bundle, need(class)?),
        PlotKind::Scatter => scatter_svg(bundle, class),
    }
}
