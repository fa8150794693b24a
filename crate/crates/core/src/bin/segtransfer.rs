use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use segtransfer::config::{reference_config, AppConfig};
use segtransfer::io::{load_dataset, read_segments_csv, write_dataset, write_segments_csv, LoadedDataset};
use segtransfer::paircorr::classwise_correlations;
use segtransfer::render::{render, PlotKind};
use segtransfer::report::{
    analyze, discriminator_report, error_reports, error_rows, rules_json, write_analysis,
    write_errors_csv, ReportBundle,
};
use segtransfer::segmeta::dataset_records;
use segtransfer::shiftsim::gen_paired_dataset;
use segtransfer::{Error, Result};

#[derive(Parser)]
#[command(name = "segtransfer", version, about = "Transferability measures for paired real/synthetic segmentation results")]
struct Cli {
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// INI configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (the SVG file for `render`); stdout when omitted where supported.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired dataset with a controllable domain shift.
    Simgen {
        /// Number of samples.
        #[arg(long)]
        n: Option<usize>,
        /// Shift of the synthetic channel's noise model.
        #[arg(long)]
        delta: Option<f64>,
        /// Copy the real predictions into the synthetic channel.
        #[arg(long)]
        shared: bool,
    },
    /// Run every analysis and write report.json plus CSV series.
    Analyze { manifest: PathBuf },
    /// Per-class IoU and per-image mIoU correlation between domains.
    Correlate { manifest: PathBuf },
    /// TP/FN error profiles per class and domain.
    Errordist { manifest: PathBuf },
    /// Per-segment feature table as CSV.
    Segments { manifest: PathBuf },
    /// Learn real-vs-synthetic rules per class.
    Rules {
        /// Dataset manifest; alternatively use --segments.
        manifest: Option<PathBuf>,
        /// Segment table written by `segments`.
        #[arg(long, conflicts_with = "manifest")]
        segments: Option<PathBuf>,
    },
    /// Draw an SVG chart from a report.
    Render {
        report: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        class: Option<usize>,
    },
    /// Print the reference configuration with every default.
    Config,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Radar,
    Boxplot,
    Scatter,
}

impl From<Kind> for PlotKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Radar => PlotKind::Radar,
            Kind::Boxplot => PlotKind::Boxplot,
            Kind::Scatter => PlotKind::Scatter,
        }
    }
}

fn load_config(cli: &Cli) -> Result<AppConfig> {
    let mut cfg = match &cli.config {
        Some(path) => AppConfig::from_file(path)?,
        None => AppConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn load(manifest: &Path) -> Result<LoadedDataset> {
    let dataset = load_dataset(manifest)?;
    for w in &dataset.warnings {
        eprintln!("warning: {w}");
    }
    Ok(dataset)
}

/// Writes `text` to `out/name`, or to stdout without `--out`.
fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(name);
            fs::write(&path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Simgen { n, delta, shared } => {
            let mut cfg = cfg;
            if let Some(n) = n {
                cfg.simgen_samples = *n;
            }
            if let Some(delta) = delta {
                cfg.shift.delta = *delta;
            }
            cfg.shift.shared_realization |= shared;
            cfg.validate()?;
            let out = out.ok_or_else(|| Error::Usage("simgen needs --out".into()))?;
            let samples = gen_paired_dataset(&cfg.scene, &cfg.shift, cfg.simgen_samples)?;
            let names: Vec<String> = (0..cfg.scene.num_classes).map(|c| format!("class_{c}")).collect();
            let manifest = write_dataset(out, &samples, &names)?;
            eprintln!("wrote {} samples, manifest {}", samples.len(), manifest.display());
        }
        Command::Analyze { manifest } => {
            let out = out.ok_or_else(|| Error::Usage("analyze needs --out".into()))?;
            let dataset = load(manifest)?;
            let analysis = analyze(&dataset, &cfg)?;
            for w in analysis.bundle.warnings.iter().skip(dataset.warnings.len()) {
                eprintln!("warning: {w}");
            }
            for path in write_analysis(out, &analysis)? {
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Correlate { manifest } => {
            let dataset = load(manifest)?;
            let report = classwise_correlations(&dataset.samples, &cfg.correlation)?;
            emit(out, "correlation.json", &pretty(&report)?)?;
        }
        Command::Errordist { manifest } => {
            let dataset = load(manifest)?;
            let c = dataset.manifest.num_classes;
            let rows = error_rows(&dataset.samples)?;
            emit(out, "errordist.json", &pretty(&error_reports(&rows, c)?)?)?;
            if let Some(dir) = out {
                let path = dir.join("errors.csv");
                write_errors_csv(&path, &rows, c)?;
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Segments { manifest } => {
            let dataset = load(manifest)?;
            let records = dataset_records(&dataset.samples, cfg.segment_iou)?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    let path = dir.join("segments.csv");
                    write_segments_csv(fs::File::create(&path)?, &records)?;
                    eprintln!("wrote {} segments to {}", records.len(), path.display());
                }
                None => write_segments_csv(io::stdout().lock(), &records)?,
            }
        }
        Command::Rules { manifest, segments } => {
            let (records, c) = match (manifest, segments) {
                (Some(m), None) => {
                    let dataset = load(m)?;
                    let c = dataset.manifest.num_classes;
                    (dataset_records(&dataset.samples, cfg.segment_iou)?, c)
                }
                (None, Some(csv)) => {
                    let records = read_segments_csv(csv)?;
                    let c = records.iter().map(|r| r.class + 1).max().ok_or(Error::EmptyDataset)?;
                    (records, c)
                }
                _ => return Err(Error::Usage("rules needs a manifest or --segments".into())),
            };
            let report = discriminator_report(&records, c, &cfg)?;
            emit(out, "rules.json", &rules_json(&report)?)?;
        }
        Command::Render { report, kind, class } => {
            let bundle = ReportBundle::read(report)?;
            let svg = render(&bundle, (*kind).into(), *class)?;
            match out {
                Some(path) => {
                    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                        fs::create_dir_all(parent)?;
                    }
                    fs::write(path, svg)?;
                    eprintln!("wrote {}", path.display());
                }
                None => io::stdout().write_all(svg.as_bytes())?,
            }
        }
        Command::Config => emit(out, "segtransfer.ini", &reference_config())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
