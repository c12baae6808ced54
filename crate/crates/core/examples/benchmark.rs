//! A small batch experiment: baseline vs two-stage over seeded samples, with
//! records, aggregates and a solve-time chart written to disk.
//!
//!     cargo run --release --example benchmark [out_dir]

use std::path::PathBuf;

use v2g_core::bench::{run_experiment, ExperimentConfig, Method};
use v2g_core::scenario::ScenarioSpec;

fn main() -> v2g_core::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "bench_out".into()));
    let cfg = ExperimentConfig {
        spec: ScenarioSpec {
            arrivals_per_slot: (0, 1),
            ..ScenarioSpec::for_case("case18_synth")
        },
        samples: 4,
        methods: vec![Method::Baseline, Method::DcOnly, Method::TwoStage],
        deltas: vec![0, 2],
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cfg)?;
    for g in &report.groups {
        println!(
            "{:<10} delta {:<4} feasible {:5.1}%  mean gap {:>10}  median time {:.2}s",
            g.method.to_string(),
            g.delta.map_or("-".into(), |d| d.to_string()),
            g.feasibility_ratio,
            g.mean_gap_pct.map_or("n/a".into(), |x| format!("{x:.5}%")),
            g.median_time_s
        );
    }
    for (k, v) in &report.speedup {
        println!("speedup at {k}: {v:.2}x");
    }
    report.write(&out)?;
    println!("records, timings, report and chart written to {}", out.display());
    Ok(())
}
