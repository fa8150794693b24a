//! Sweeps the simulator's domain shift and prints mean discriminator
//! accuracy per shift, over all segments and over error segments only.
//!
//! cargo run --release -p segtransfer --example shift_sweep -- [n_images] [seeds]

use std::time::Instant;

use segtransfer::rulekit::{run_discriminator, RuleConfig, Variant};
use segtransfer::segmeta::{dataset_records, SegmentIouMode};
use segtransfer::shiftsim::{gen_paired_dataset, SceneConfig, ShiftConfig};

fn main() -> segtransfer::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(200);
    let seeds: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);
    let scene = SceneConfig::default();
    for delta in [0.0, 0.25, 0.5, 1.0] {
        let start = Instant::now();
        let mut acc = [Vec::new(), Vec::new()];
        let mut base = [Vec::new(), Vec::new()];
        let mut counts = vec![0usize; scene.num_classes];
        for seed in 0..seeds {
            let scene = SceneConfig { seed, ..scene.clone() };
            let shift = ShiftConfig::with_defaults(scene.num_classes, delta);
            let data = gen_paired_dataset(&scene, &shift, n)?;
            let records = dataset_records(&data, SegmentIouMode::Adjusted)?;
            for r in &records {
                counts[r.class] += 1;
            }
            let config = RuleConfig { seed, ..RuleConfig::default() };
            for (slot, variant) in [Variant::AllSegments, Variant::ErrorsOnly].into_iter().enumerate() {
                for class in 0..scene.num_classes {
                    match run_discriminator(&records, class, variant, &config) {
                        Ok(res) => {
                            acc[slot].push(res.test_accuracy);
                            base[slot].push(res.majority_baseline);
                        }
                        Err(e) => eprintln!("delta {delta} seed {seed} class {class} {}: {e}", variant.as_str()),
                    }
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        println!(
            "delta {delta:>4}: all {:.3} (baseline {:.3})  errors {:.3} (baseline {:.3})  segments/class/seed {:?}  [{:.1?}]",
            mean(&acc[0]),
            mean(&base[0]),
            mean(&acc[1]),
            mean(&base[1]),
            counts.iter().map(|c| c / seeds as usize).collect::<Vec<_>>(),
            start.elapsed()
        );
    }
    Ok(())
}
