//! Stage 1 alone: the penalized path-following relaxation on a generated
//! sample. Prints the trace and how many binaries came out integral.
//!
//!     cargo run --release --example dc_relaxation [seed]

use v2g_core::dc::{run_dc, DcConfig};
use v2g_core::scenario::{generate_sample, ScenarioSpec};
use v2g_core::v2g::assemble_primal;

fn main() -> v2g_core::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let spec = ScenarioSpec {
        arrivals_per_slot: (0, 1),
        ..ScenarioSpec::for_case("case18_synth")
    };
    let s = generate_sample(&spec, seed)?;
    let model = assemble_primal(&s.case, &s.sessions, &s.prices)?;
    let cfg = DcConfig::for_model(&model);
    println!(
        "{} EVs, {} binaries, lambda {:.1}",
        s.sessions.len(),
        model.program.num_binaries(),
        cfg.lambda
    );

    let out = run_dc(&model.program, &cfg)?;
    for run in &out.trace.runs {
        println!(
            "lambda {:.1}: {} iterates, max ascent {:.2e}",
            run.lambda,
            run.iterates.len(),
            run.max_ascent()
        );
    }
    println!("final run:");
    out.trace.write_csv(std::io::stdout())?;
    println!(
        "status {:?}, {:.1}% of binaries integral, max fractionality {:.3}, {:.2}s",
        out.status,
        100.0 * out.integral_share(1e-5),
        out.max_frac(),
        out.time
    );
    Ok(())
}
