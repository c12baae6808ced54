//! Seeded random samples: perturbed loads and impedances, noisy prices and
//! random EV arrivals. Writes archives and reads one back.
//!
//!     cargo run --example generate_scenarios [out_dir]

use std::path::PathBuf;

use v2g_core::scenario::{generate_sample, Sample, ScenarioSpec};

fn main() -> v2g_core::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "samples".into()));
    let spec = ScenarioSpec::for_case("case18_synth");
    for seed in 0..3 {
        let s = generate_sample(&spec, seed)?;
        let energy: f64 = s.sessions.iter().map(|e| e.e_dep - e.e_arr).sum();
        println!(
            "seed {seed}: {} EVs, {:.0} kWh to deliver, prices {:.2}..{:.2}, {} redraws",
            s.sessions.len(),
            energy,
            s.prices.beta.iter().cloned().fold(f64::INFINITY, f64::min),
            s.prices.beta.iter().cloned().fold(0.0, f64::max),
            s.regenerations
        );
        s.write_dir(&out.join(format!("sample_{seed:03}")), Some(&spec))?;
    }
    let back = Sample::read_dir(&out.join("sample_000"))?;
    assert_eq!(back.sessions, generate_sample(&spec, 0)?.sessions);
    println!("archives written to {} and reloaded", out.display());
    Ok(())
}
