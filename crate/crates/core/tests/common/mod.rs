//! Shared helpers for the integration tests. The invariant checks recompute
//! every quantity from the raw solution vector instead of calling the
//! library's own checker.

#![allow(dead_code)]

use v2g_core::bnb::{enumerate_oracle, solve_misocp, BnbConfig};
use v2g_core::conic::SolveOptions;
use v2g_core::scenario::{bundled_case, bundled_prices, ScenarioSpec};
use v2g_core::trust_region::StageOutcome;
use v2g_core::v2g::{assemble_primal, EvSession, PriceCurve, V2gModel};

/// Toy session on the 4-bus case with a free-standing window.
pub fn toy_session(id: usize, t_arr: usize, t_dep: usize, e_arr: f64, e_dep: f64) -> EvSession {
    EvSession {
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
    }
}

/// The 4-bus toy truncated to `periods` with bundled prices.
pub fn toy_model(periods: usize, sessions: Vec<EvSession>) -> V2gModel {
    let case = bundled_case("case4_toy").unwrap().truncated(periods).unwrap();
    let beta = bundled_prices().beta[..periods].to_vec();
    assemble_primal(&case, &sessions, &PriceCurve::new(beta)).unwrap()
}

/// Five toy instances with at most 12 binaries each, so exhaustive
/// enumeration stays within seconds.
pub fn toy_instances() -> Vec<(&'static str, V2gModel)> {
    vec![
        ("one ev, T=2", toy_model(2, vec![toy_session(0, 0, 2, 40.0, 50.0)])),
        (
            "two evs, T=2",
            toy_model(
                2,
                vec![toy_session(0, 0, 2, 40.0, 50.0), toy_session(1, 0, 2, 60.0, 55.0)],
            ),
        ),
        ("one ev, T=4", toy_model(4, vec![toy_session(0, 0, 4, 30.0, 60.0)])),
        (
            "two evs staggered, T=4",
            toy_model(
                4,
                vec![toy_session(0, 0, 3, 50.0, 60.0), toy_session(1, 1, 4, 40.0, 70.0)],
            ),
        ),
        (
            "two evs shifted windows, T=4",
            toy_model(
                4,
                vec![toy_session(0, 0, 3, 80.0, 80.0), toy_session(1, 1, 4, 20.0, 60.0)],
            ),
        ),
    ]
}

pub fn oracle_objective(m: &V2gModel) -> f64 {
    enumerate_oracle(&m.program, &SolveOptions::default())
        .unwrap()
        .solution
        .objective_value
}

pub fn bnb_objective(m: &V2gModel) -> (f64, bool) {
    let r = solve_misocp(&m.program, &BnbConfig::default()).unwrap();
    (r.solution.objective_value, r.proved_optimal)
}

/// Scenario used by the acceptance batches. See the README for why the
/// arrival rate is lower than the generator's default.
pub fn desk_spec(case: &str, periods: usize) -> ScenarioSpec {
    ScenarioSpec {
        case: case.into(),
        periods,
        arrivals_per_slot: (0, 1),
        ..ScenarioSpec::default()
    }
}

/// Largest violation found by [`check_invariants`], per kind.
#[derive(Debug, Default)]
pub struct InvariantReport {
    pub telescoping: f64,
    pub simultaneous: f64,
    pub cost_split: f64,
    pub balance: f64,
    pub integral: bool,
}

impl InvariantReport {
    pub fn assert_ok(&self, what: &str) {
        assert!(
            self.telescoping <= 1e-9,
            "{what}: telescoping residual {}",
            self.telescoping
        );
        if self.integral {
            assert_eq!(self.simultaneous, 0.0, "{what}: simultaneous charge and discharge");
        }
        assert!(
            self.cost_split <= 1e-9,
            "{what}: objective vs C_g + C_ev off by {}",
            self.cost_split
        );
        assert!(self.balance <= 1e-6, "{what}: balance residual {}", self.balance);
    }
}

/// Recomputes energy telescoping, charge/discharge exclusion, the cost split
/// and the nodal power balances from `values` (already finalized).
pub fn check_invariants(m: &V2gModel, values: &[f64]) -> InvariantReport {
    let case = &m.case;
    let mut rep = InvariantReport {
        integral: m.binaries().iter().all(|v| values[v.0] == 0.0 || values[v.0] == 1.0),
        ..Default::default()
    };

    let mut draw = vec![vec![0.0; case.periods]; case.buses.len()];
    let mut c_ev = 0.0;
    for ((ev, slots), &bus) in m.sessions.iter().zip(&m.v2g.slots).zip(&m.v2g.station) {
        let mut e_prev = ev.e_arr;
        for s in slots {
            let (pc, pd) = (values[s.p_ch.0], values[s.p_dis.0]);
            let e = values[s.energy.0];
            rep.telescoping = rep.telescoping.max((e - e_prev - case.dt * (pc - pd)).abs());
            rep.simultaneous = rep.simultaneous.max(pc * pd);
            e_prev = e;
            c_ev += m.prices.beta[s.t] * (pc - pd);
            draw[bus][s.t] += (pc / ev.eta - pd * ev.eta) / (1000.0 * case.base_mva);
        }
    }

    let mut c_g = 0.0;
    for g in &case.generators {
        let i = case.buses.iter().position(|b| b.id == g.bus).unwrap();
        for t in 0..case.periods {
            let p_mw = values[m.opf.p_gen[i][t].unwrap().0] * case.base_mva;
            c_g += g.cost.c2 * p_mw * p_mw + g.cost.c1 * p_mw + g.cost.c0;
        }
    }
    let obj = m.program.objective_value(values);
    rep.cost_split = (obj - (c_g + c_ev)).abs();

    // Inflow minus losses at the receiving end, outflow at the sending end.
    let topo = &m.opf.topology;
    for t in 0..case.periods {
        for (j, bus) in case.buses.iter().enumerate() {
            let mut p = -bus.p_load[t] - draw[j][t];
            let mut q = -bus.q_load[t];
            if let Some(v) = m.opf.p_gen[j][t] {
                p += values[v.0];
            }
            if let Some(v) = m.opf.q_gen[j][t] {
                q += values[v.0];
            }
            for ob in &topo.oriented {
                let br = &case.branches[ob.branch];
                let (pf, qf, l) = (
                    values[m.opf.p_flow[ob.branch][t].0],
                    values[m.opf.q_flow[ob.branch][t].0],
                    values[m.opf.l[ob.branch][t].0],
                );
                if ob.to == j {
                    p += pf - br.r * l;
                    q += qf - br.x * l;
                }
                if ob.from == j {
                    p -= pf;
                    q -= qf;
                }
            }
            rep.balance = rep.balance.max(p.abs()).max(q.abs());
        }
    }
    rep
}

/// Finalizes a raw solution and checks every invariant on it.
pub fn assert_solution(m: &V2gModel, values: &[f64], what: &str) {
    let mut v = values.to_vec();
    m.finalize(&mut v);
    check_invariants(m, &v).assert_ok(what);
}

/// Flip count recomputed from the warm start, plus all solution invariants.
pub fn assert_stage(m: &V2gModel, out: &StageOutcome, what: &str) {
    let ws = &out.warm_start;
    let flips = ws.s0.iter().filter(|v| out.values[v.0].round() != 0.0).count()
        + ws.s1.iter().filter(|v| out.values[v.0].round() != 1.0).count();
    assert!(
        flips <= out.delta_used,
        "{what}: {flips} flips > delta {}",
        out.delta_used
    );
    assert_eq!(flips, out.flip_count, "{what}: reported flip count");
    assert_solution(m, &out.values, what);
}
