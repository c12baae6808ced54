//! Joint grid + charger model on the 4-bus toy network with two EVs, solved
//! exactly by branch and bound. Prints each EV's schedule and the cost split.
//!
//!     cargo run --example v2g_schedule

use v2g_core::bnb::{solve_misocp, BnbConfig};
use v2g_core::scenario::{bundled_case, bundled_prices};
use v2g_core::v2g::{assemble_primal, EvSession, PriceCurve};

fn main() -> v2g_core::Result<()> {
    let case = bundled_case("case4_toy")?;
    let prices = PriceCurve::new(bundled_prices().beta[16..20].to_vec());
    let ev = |id, t_arr, t_dep, e_arr, e_dep| EvSession {
        id,
        station_bus: 3,
        t_arr,
        t_dep,
        e_arr,
        e_dep,
        e_min: 10.0,
        e_max: 100.0,
        p_min: 10.0,
        p_max: 20.0,
        eta: 0.8,
    };
    let sessions = vec![ev(0, 0, 4, 60.0, 70.0), ev(1, 1, 4, 30.0, 60.0)];
    let model = assemble_primal(&case, &sessions, &prices)?;
    println!(
        "{} variables, {} binaries; prices {:?}",
        model.program.num_vars(),
        model.program.num_binaries(),
        prices.beta
    );

    let res = solve_misocp(&model.program, &BnbConfig::default())?;
    let mut x = res.solution.values;
    model.finalize(&mut x);
    for (ev, slots) in sessions.iter().zip(&model.v2g.slots) {
        println!(
            "EV {} (arrives {} kWh, must leave with {} kWh):",
            ev.id, ev.e_arr, ev.e_dep
        );
        for s in slots {
            println!(
                "  t={}  charge {:5.2} kW  discharge {:5.2} kW  energy {:6.2} kWh",
                s.t, x[s.p_ch.0], x[s.p_dis.0], x[s.energy.0]
            );
        }
    }
    let cost = model.cost_breakdown(&x);
    println!(
        "C_g {:.4}  C_ev {:.4}  total {:.4}  ({} nodes, proved {})",
        cost.c_g,
        cost.c_ev,
        cost.total(),
        res.nodes_explored,
        res.proved_optimal
    );
    let rep = model.check_full_feasibility(&x, 1e-6);
    println!(
        "feasible {}  telescoping residual {:.1e}",
        rep.feasible,
        model.telescoping_residual(&x)
    );
    Ok(())
}
