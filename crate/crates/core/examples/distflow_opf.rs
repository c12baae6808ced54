//! Continuous DistFlow optimal power flow on a bundled network, without EVs.
//! Prints per-slot generation, cost and the voltage profile.
//!
//!     cargo run --example distflow_opf [case]

use v2g_core::conic::{solve_continuous, ConicProgram, SolveOptions};
use v2g_core::distflow::{build_opf, check_opf_feasibility, InjectionHooks};
use v2g_core::scenario::resolve_case;

fn main() -> v2g_core::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "case18_synth".into());
    let case = resolve_case(&name)?;
    let mut prog = ConicProgram::new();
    let hooks = InjectionHooks::zero(case.buses.len(), case.periods);
    let frag = build_opf(&mut prog, &case, &hooks)?;
    prog.set_objective(frag.cost.clone())?;

    let sol = solve_continuous(&prog, &SolveOptions::default())?;
    println!(
        "{name}: {} buses, {} slots, status {}",
        case.buses.len(),
        case.periods,
        sol.status
    );
    let map = &frag.map;
    let root = map.topology.root;
    for t in 0..case.periods {
        let gen: f64 = map.p_gen.iter().filter_map(|g| g[t]).map(|v| sol.values[v.0]).sum();
        let load: f64 = case.buses.iter().map(|b| b.p_load[t]).sum();
        let v_min = map
            .w
            .iter()
            .map(|w| sol.values[w[t].0].sqrt())
            .fold(f64::INFINITY, f64::min);
        println!(
            "t={t:2}  load {:.3} MW  gen {:.3} MW  losses {:.4} MW  min |V| {:.4}",
            load * case.base_mva,
            gen * case.base_mva,
            (gen - load) * case.base_mva,
            v_min
        );
    }
    println!(
        "root bus index {root}, generation cost {:.2}",
        map.generation_cost(&case, &sol.values)
    );
    let check = check_opf_feasibility(&case, map, &sol.values, None, 1e-6);
    println!(
        "independent check: feasible {}, max violation {:.2e}, cone gap {:.2e}",
        check.feasible,
        check.max(),
        check.cone_gap
    );
    Ok(())
}
