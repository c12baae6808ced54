//! Exact mixed-integer solve checked against exhaustive enumeration on a toy
//! instance small enough to enumerate, with the node log written as CSV.
//!
//!     cargo run --example branch_and_bound

use v2g_core::bnb::{enumerate_oracle, solve_misocp, BnbConfig};
use v2g_core::conic::SolveOptions;
use v2g_core::scenario::{bundled_case, bundled_prices};
use v2g_core::v2g::{assemble_primal, EvSession, PriceCurve};

fn main() -> v2g_core::Result<()> {
    let case = bundled_case("case4_toy")?.truncated(2)?;
    let prices = PriceCurve::new(bundled_prices().beta[..2].to_vec());
    let ev = |id, e_arr, e_dep| EvSession {
        id,
        station_bus: 3,
        t_arr: 0,
        t_dep: 2,
        e_arr,
        e_dep,
        e_min: 10.0,
        e_max: 100.0,
        p_min: 10.0,
        p_max: 20.0,
        eta: 0.8,
    };
    let model = assemble_primal(&case, &[ev(0, 40.0, 50.0), ev(1, 60.0, 55.0)], &prices)?;

    let cfg = BnbConfig {
        log_nodes: true,
        ..BnbConfig::default()
    };
    let bnb = solve_misocp(&model.program, &cfg)?;
    let oracle = enumerate_oracle(&model.program, &SolveOptions::default())?;
    println!(
        "branch and bound: {:.8} in {} nodes (proved {}), best bound {:.8}",
        bnb.solution.objective_value, bnb.nodes_explored, bnb.proved_optimal, bnb.best_bound
    );
    println!(
        "enumeration over 2^{} fixings: {:.8}",
        model.program.num_binaries(),
        oracle.solution.objective_value
    );
    bnb.write_node_log(std::io::stdout())?;
    Ok(())
}
