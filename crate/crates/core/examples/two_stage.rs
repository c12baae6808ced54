//! The full two-stage method on a generated sample, compared against exact
//! branch and bound at a few trust-region radii.
//!
//!     cargo run --release --example two_stage [seed]

use std::time::Instant;

use v2g_core::bench::gap;
use v2g_core::bnb::{solve_misocp, BnbConfig};
use v2g_core::dc::{run_dc, DcConfig};
use v2g_core::scenario::{generate_sample, ScenarioSpec};
use v2g_core::trust_region::{run_stage_two, Escalation, TrustRegionConfig};
use v2g_core::v2g::assemble_primal;

fn main() -> v2g_core::Result<()> {
    let seed = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed"));
    let spec = ScenarioSpec {
        arrivals_per_slot: (0, 1),
        ..ScenarioSpec::for_case("case18_synth")
    };
    let s = generate_sample(&spec, seed)?;
    let model = assemble_primal(&s.case, &s.sessions, &s.prices)?;
    let bnb = BnbConfig::default();

    let t = Instant::now();
    let exact = solve_misocp(&model.program, &bnb)?;
    let t_exact = t.elapsed().as_secs_f64();
    let opt = exact.solution.objective_value;
    println!("baseline: {opt:.4} in {t_exact:.2}s, {} nodes", exact.nodes_explored);

    let dc = run_dc(&model.program, &DcConfig::for_model(&model))?;
    println!(
        "stage 1: {:?} after {} iterations, {:.2}s",
        dc.status,
        dc.trace.total_iterations(),
        dc.time
    );
    for delta in [0, 1, 2] {
        let tr = TrustRegionConfig {
            escalation: Escalation::Disabled,
            ..TrustRegionConfig::with_delta(delta)
        };
        match run_stage_two(&model.program, &dc, &tr, &bnb) {
            Ok(o) => {
                let mut x = o.values.clone();
                model.finalize(&mut x);
                let c = model.cost_breakdown(&x);
                println!(
                    "delta {delta}: {:.4} (gap {:.5}%), {} flips of {} settled, C_g {:.2}, C_ev {:.2}, total {:.2}s, feasible {}",
                    o.objective,
                    gap(o.objective, opt),
                    o.flip_count,
                    o.settled,
                    c.c_g,
                    c.c_ev,
                    o.total_time,
                    model.check_full_feasibility(&x, 1e-6).feasible
                );
            }
            Err(e) => println!("delta {delta}: {e}"),
        }
    }
    Ok(())
}
