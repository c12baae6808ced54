//! EV sessions, charge/discharge constraints, and assembly of the full
//! mixed-integer program (grid + chargers) with its cost objective.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conic::{fractionality, ConicProgram, LinearExpr, VarId};
use crate::distflow::{build_opf, check_opf_feasibility, InjectionHooks, NetworkCase, OpfVarMap, OpfViolation};
use crate::error::{Error, Result};

/// One EV's connection window at a station. Energies in kWh, powers in kW.
/// Connected slots are `t_arr..t_dep`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvSession {
    pub id: usize,
    pub station_bus: usize,
    pub t_arr: usize,
    pub t_dep: usize,
    pub e_arr: f64,
    pub e_dep: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub eta: f64,
}

impl EvSession {
    pub fn validate(&self, periods: usize) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidSession {
                ev: self.id,
                reason: reason.into(),
            })
        };
        if self.t_dep > periods {
            return Err(Error::SessionOutOfHorizon {
                ev: self.id,
                t_dep: self.t_dep,
                horizon: periods,
            });
        }
        if self.t_arr >= self.t_dep {
            return bad("t_arr must precede t_dep");
        }
        if !(self.e_min <= self.e_arr && self.e_arr <= self.e_max) {
            return bad("e_arr outside [e_min, e_max]");
        }
        if !(self.e_min <= self.e_dep && self.e_dep <= self.e_max) {
            return bad("e_dep outside [e_min, e_max]");
        }
        if !(0.0 <= self.p_min && self.p_min <= self.p_max) {
            return bad("power bounds must satisfy 0 <= p_min <= p_max");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn slots(&self) -> std::ops::Range<usize> {
        self.t_arr..self.t_dep
    }
}

/// Charger variables for one connected slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotVars {
    pub t: usize,
    pub p_ch: VarId,
    pub p_dis: VarId,
    pub energy: VarId,
    pub y_ch: VarId,
    pub y_dis: VarId,
}

#[derive(Clone, Debug)]
pub struct V2gVarMap {
    /// `slots[ev]` in session order, one entry per connected slot.
    pub slots: Vec<Vec<SlotVars>>,
    /// Bus index (not id) of each session's station.
    pub station: Vec<usize>,
}

impl V2gVarMap {
    /// All charge/discharge binaries, ascending.
    pub fn binaries(&self) -> Vec<VarId> {
        let mut v: Vec<VarId> = self.slots.iter().flatten().flat_map(|s| [s.y_ch, s.y_dis]).collect();
        v.sort();
        v
    }
}

/// Electricity price per slot (currency per kWh).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceCurve {
    pub beta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PriceRow {
    slot: usize,
    price: f64,
}

impl PriceCurve {
    pub fn new(beta: Vec<f64>) -> Self {
        Self { beta }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// Largest absolute price, used to scale penalties.
    pub fn scale(&self) -> f64 {
        self.beta.iter().fold(0.0, |m, b| m.max(b.abs()))
    }

    /// Reads `slot,price` rows; slots must run `0..n` in order.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut beta = Vec::new();
        for (i, row) in rdr.deserialize::<PriceRow>().enumerate() {
            let row = row.map_err(|e| Error::schema(path, format!("row {i}: {e}")))?;
            if row.slot != i {
                return Err(Error::schema(path, format!("slot: expected {i}, found {}", row.slot)));
            }
            if !row.price.is_finite() {
                return Err(Error::schema(path, format!("price: non-finite at slot {i}")));
            }
            beta.push(row.price);
        }
        Ok(Self { beta })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (slot, &price) in self.beta.iter().enumerate() {
            w.serialize(PriceRow { slot, price })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Adds the charger constraints for all sessions. Returns the variable map
/// and the per-(bus, slot) grid-side draw `sum (P+/eta - P- eta)` in
/// per-unit.
pub fn build_v2g(
    prog: &mut ConicProgram,
    sessions: &[EvSession],
    case: &NetworkCase,
) -> Result<(V2gVarMap, InjectionHooks)> {
    let nt = case.periods;
    let mut hooks = InjectionHooks::zero(case.buses.len(), nt);
    let kw_to_pu = 1.0 / (1000.0 * case.base_mva);
    let mut slots = Vec::with_capacity(sessions.len());
    let mut station = Vec::with_capacity(sessions.len());
    for ev in sessions {
        ev.validate(nt)?;
        let bus = case.bus_index(ev.station_bus).ok_or_else(|| Error::InvalidSession {
            ev: ev.id,
            reason: format!("station bus {} not in case", ev.station_bus),
        })?;
        station.push(bus);

        let mut evs = Vec::with_capacity(ev.t_dep - ev.t_arr);
        let mut prev = LinearExpr::constant(ev.e_arr);
        for t in ev.slots() {
            let p_ch = prog.add_variable(0.0, ev.p_max, false)?;
            let p_dis = prog.add_variable(0.0, ev.p_max, false)?;
            let energy = prog.add_variable(ev.e_min, ev.e_max, false)?;
            let y_ch = prog.add_variable(0.0, 1.0, true)?;
            let y_dis = prog.add_variable(0.0, 1.0, true)?;

            prog.add_ineq(LinearExpr::from_terms([(y_ch, 1.0), (y_dis, 1.0)], -1.0))?;
            for (p, y) in [(p_ch, y_ch), (p_dis, y_dis)] {
                prog.add_ineq(LinearExpr::from_terms([(p, 1.0), (y, -ev.p_max)], 0.0))?;
                prog.add_ineq(LinearExpr::from_terms([(y, ev.p_min), (p, -1.0)], 0.0))?;
            }
            // E_t - E_{t-1} - dt (P+ - P-) = 0
            let mut bal = LinearExpr::from_terms([(energy, 1.0), (p_ch, -case.dt), (p_dis, case.dt)], 0.0);
            bal.add_scaled(&prev, -1.0);
            prog.add_eq(bal)?;
            prev = LinearExpr::var(energy);

            hooks.add(
                bus,
                t,
                &LinearExpr::from_terms([(p_ch, kw_to_pu / ev.eta), (p_dis, -kw_to_pu * ev.eta)], 0.0),
            );
            evs.push(SlotVars {
                t,
                p_ch,
                p_dis,
                energy,
                y_ch,
                y_dis,
            });
        }
        // departure energy requirement
        prog.add_ineq(prev.scaled(-1.0).with_constant(ev.e_dep))?;
        slots.push(evs);
    }
    Ok((V2gVarMap { slots, station }, hooks))
}

/// Cost components: generation and EV charging.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub c_g: f64,
    pub c_ev: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.c_g + self.c_ev
    }
}

/// The assembled mixed-integer program together with everything needed to
/// interpret its solutions.
#[derive(Clone, Debug)]
pub struct V2gModel {
    pub case: NetworkCase,
    pub sessions: Vec<EvSession>,
    pub prices: PriceCurve,
    pub program: ConicProgram,
    pub opf: OpfVarMap,
    pub v2g: V2gVarMap,
}

/// Builds grid + charger constraints and the total-cost objective.
pub fn assemble_primal(case: &NetworkCase, sessions: &[EvSession], prices: &PriceCurve) -> Result<V2gModel> {
    if prices.len() != case.periods {
        return Err(Error::Invariant(format!(
            "{} prices for T = {}",
            prices.len(),
            case.periods
        )));
    }
    let mut program = ConicProgram::new();
    let (v2g, hooks) = build_v2g(&mut program, sessions, case)?;
    let frag = build_opf(&mut program, case, &hooks)?;
    let mut objective = frag.cost;
    for s in v2g.slots.iter().flatten() {
        let beta = prices.beta[s.t];
        objective.add_term(s.p_ch, beta);
        objective.add_term(s.p_dis, -beta);
    }
    program.set_objective(objective)?;
    Ok(V2gModel {
        case: case.clone(),
        sessions: sessions.to_vec(),
        prices: prices.clone(),
        program,
        opf: frag.map,
        v2g,
    })
}

/// Feasibility of a full solution: grid constraints plus charger logic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub opf: OpfViolation,
    /// Mutual exclusion `y+ + y- <= 1`.
    pub exclusion: f64,
    /// Power within `[p_min y, p_max y]`.
    pub power_bounds: f64,
    pub energy_balance: f64,
    pub energy_bounds: f64,
    pub departure: f64,
    /// Largest distance of any binary from its rounding.
    pub integrality: f64,
    pub feasible: bool,
}

pub const INTEGRALITY_TOL: f64 = 1e-6;

impl FeasibilityReport {
    pub fn max_continuous(&self) -> f64 {
        [
            self.opf.max(),
            self.exclusion,
            self.power_bounds,
            self.energy_balance,
            self.energy_bounds,
            self.departure,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl V2gModel {
    /// Grid-side EV draw per bus and slot, per-unit.
    pub fn ev_draw(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.case.periods]; self.case.buses.len()];
        let k = 1.0 / (1000.0 * self.case.base_mva);
        for ((ev, slots), &bus) in self.sessions.iter().zip(&self.v2g.slots).zip(&self.v2g.station) {
            for s in slots {
                d[bus][s.t] += k * (values[s.p_ch.0] / ev.eta - values[s.p_dis.0] * ev.eta);
            }
        }
        d
    }

    pub fn cost_breakdown(&self, values: &[f64]) -> CostBreakdown {
        let c_g = self.opf.generation_cost(&self.case, values);
        let c_ev = self
            .v2g
            .slots
            .iter()
            .flatten()
            .map(|s| self.prices.beta[s.t] * (values[s.p_ch.0] - values[s.p_dis.0]))
            .sum();
        CostBreakdown { c_g, c_ev }
    }

    /// Cleans solver round-off from a solution: binaries within
    /// [`INTEGRALITY_TOL`] are snapped, powers of switched-off directions are
    /// zeroed, energies are re-accumulated from the powers, and cost
    /// epigraph variables are moved onto their envelope so the program
    /// objective equals the true cost.
    pub fn finalize(&self, values: &mut [f64]) {
        for (ev, slots) in self.sessions.iter().zip(&self.v2g.slots) {
            let mut prev = ev.e_arr;
            for s in slots {
                for (p, y) in [(s.p_ch, s.y_ch), (s.p_dis, s.y_dis)] {
                    let r = values[y.0].round();
                    if (values[y.0] - r).abs() <= INTEGRALITY_TOL {
                        values[y.0] = r;
                    }
                    values[p.0] = if values[y.0] == 0.0 {
                        0.0
                    } else {
                        values[p.0].clamp(0.0, ev.p_max)
                    };
                }
                prev += self.case.dt * (values[s.p_ch.0] - values[s.p_dis.0]);
                values[s.energy.0] = prev;
            }
        }
        self.opf.tighten_epigraphs(&self.case, values);
    }

    pub fn binaries(&self) -> Vec<VarId> {
        self.v2g.binaries()
    }

    pub fn check_full_feasibility(&self, values: &[f64], tol: f64) -> FeasibilityReport {
        let draw = self.ev_draw(values);
        let opf = check_opf_feasibility(&self.case, &self.opf, values, Some(&draw), tol);
        let x = |v: VarId| values[v.0];
        let mut r = FeasibilityReport {
            opf,
            ..Default::default()
        };
        for (ev, slots) in self.sessions.iter().zip(&self.v2g.slots) {
            let mut prev = ev.e_arr;
            for s in slots {
                let (pc, pd, e) = (x(s.p_ch), x(s.p_dis), x(s.energy));
                let (yc, yd) = (x(s.y_ch), x(s.y_dis));
                r.exclusion = r.exclusion.max(yc + yd - 1.0);
                for (p, y) in [(pc, yc), (pd, yd)] {
                    r.power_bounds = r
                        .power_bounds
                        .max(p - ev.p_max * y)
                        .max(ev.p_min * y - p)
                        .max(-p)
                        .max(-y)
                        .max(y - 1.0);
                    r.integrality = r.integrality.max(fractionality(y));
                }
                r.energy_balance = r.energy_balance.max((e - prev - self.case.dt * (pc - pd)).abs());
                r.energy_bounds = r.energy_bounds.max(ev.e_min - e).max(e - ev.e_max);
                prev = e;
            }
            r.departure = r.departure.max(ev.e_dep - prev);
        }
        r.exclusion = r.exclusion.max(0.0);
        r.power_bounds = r.power_bounds.max(0.0);
        r.energy_bounds = r.energy_bounds.max(0.0);
        r.departure = r.departure.max(0.0);
        r.feasible = r.max_continuous() <= tol && r.integrality <= INTEGRALITY_TOL;
        r
    }

    /// Largest `|E_last - e_arr - dt sum (P+ - P-)|` over sessions.
    pub fn telescoping_residual(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (ev, slots) in self.sessions.iter().zip(&self.v2g.slots) {
            let Some(last) = slots.last() else { continue };
            let net: f64 = slots.iter().map(|s| values[s.p_ch.0] - values[s.p_dis.0]).sum();
            worst = worst.max((values[last.energy.0] - ev.e_arr - self.case.dt * net).abs());
        }
        worst
    }

    /// Largest `P+ * P-` product over all connected slots.
    pub fn max_simultaneous_power(&self, values: &[f64]) -> f64 {
        self.v2g
            .slots
            .iter()
            .flatten()
            .map(|s| values[s.p_ch.0] * values[s.p_dis.0])
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::bnb::{enumerate_oracle, solve_misocp, BnbConfig};
    use crate::conic::{solve_continuous, SolveOptions, SolveStatus};
    use crate::distflow::{Branch, Bus, GenCost, Generator};

    /// Root + station bus, `nt` slots, light load.
    pub(crate) fn toy_case(nt: usize) -> NetworkCase {
        let bus = |id, is_root, p| Bus {
            id,
            p_load: vec![p; nt],
            q_load: vec![p * 0.3; nt],
            v_min: 0.9,
            v_max: 1.1,
            is_root,
        };
        NetworkCase {
            base_mva: 1.0,
            periods: nt,
            dt: 1.0,
            buses: vec![bus(1, true, 0.0), bus(2, false, 0.05)],
            branches: vec![Branch {
                from: 1,
                to: 2,
                r: 0.01,
                x: 0.01,
                i_max: 1.0,
            }],
            generators: vec![Generator {
                bus: 1,
                p_min: 0.0,
                p_max: 2.0,
                q_min: -2.0,
                q_max: 2.0,
                cost: GenCost {
                    c2: 0.0,
                    c1: 1.0,
                    c0: 0.0,
                },
            }],
        }
    }

    pub(crate) fn session(t_arr: usize, t_dep: usize, e_arr: f64, e_dep: f64) -> EvSession {
        EvSession {
            id: 0,
            station_bus: 2,
            t_arr,
            t_dep,
            e_arr,
            e_dep,
            e_min: 0.0,
            e_max: 100.0,
            p_min: 10.0,
            p_max: 20.0,
            eta: 0.8,
        }
    }

    #[test]
    fn idle_schedule_feasible_when_no_energy_needed() {
        let case = toy_case(3);
        let mut ev = session(0, 3, 50.0, 50.0);
        ev.p_min = 0.0;
        let m = assemble_primal(&case, &[ev], &PriceCurve::new(vec![1.0; 3])).unwrap();
        let mut fixed = m.program.clone();
        for y in m.binaries() {
            fixed.fix(y, 0.0).unwrap();
        }
        let s = solve_continuous(&fixed.continuous_relaxation(), &SolveOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!(m.check_full_feasibility(&s.values, 1e-6).feasible);
    }

    #[test]
    fn deliverable_energy_limits_window() {
        let case = toy_case(4);
        let prices = PriceCurve::new(vec![1.0; 4]);
        let cfg = BnbConfig::default();
        let ok = assemble_primal(&case, &[session(0, 4, 30.0, 100.0)], &prices).unwrap();
        assert_eq!(
            solve_misocp(&ok.program, &cfg).unwrap().solution.status,
            SolveStatus::Optimal
        );
        let short = assemble_primal(&case, &[session(1, 4, 30.0, 100.0)], &prices).unwrap();
        assert_eq!(
            solve_misocp(&short.program, &cfg).unwrap().solution.status,
            SolveStatus::Infeasible
        );
    }

    #[test]
    fn energy_trace_follows_charging() {
        let case = toy_case(3);
        let m = assemble_primal(&case, &[session(0, 3, 30.0, 70.0)], &PriceCurve::new(vec![1.0; 3])).unwrap();
        let mut p = m.program.clone();
        let s = &m.v2g.slots[0];
        for (k, pw) in [20.0, 20.0, 0.0].into_iter().enumerate() {
            p.fix(s[k].y_ch, (pw > 0.0) as u8 as f64).unwrap();
            p.fix(s[k].y_dis, 0.0).unwrap();
            p.fix(s[k].p_ch, pw).unwrap();
        }
        let sol = solve_continuous(&p.continuous_relaxation(), &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let e: Vec<f64> = s.iter().map(|v| sol.values[v.energy.0]).collect();
        for (got, want) in e.iter().zip([50.0, 70.0, 70.0]) {
            assert!((got - want).abs() < 1e-9, "{e:?}");
        }
        let rep = m.check_full_feasibility(&sol.values, 1e-6);
        assert!(rep.energy_balance < 1e-9 && rep.feasible, "{rep:?}");
        assert!(m.telescoping_residual(&sol.values) < 1e-9);
    }

    #[test]
    fn no_evs_is_plain_opf() {
        let case = toy_case(2);
        let m = assemble_primal(&case, &[], &PriceCurve::new(vec![5.0; 2])).unwrap();
        assert_eq!(m.program.num_binaries(), 0);
        let s = solve_continuous(&m.program, &SolveOptions::default()).unwrap();
        let mut v = s.values.clone();
        m.finalize(&mut v);
        let c = m.cost_breakdown(&v);
        assert_eq!(c.c_ev, 0.0);
        assert!((m.program.objective_value(&v) - c.total()).abs() < 1e-9);
    }

    #[test]
    fn binary_count_is_twice_connected_slots() {
        let case = toy_case(6);
        let sessions = [session(0, 6, 30.0, 100.0), session(2, 6, 40.0, 100.0)];
        let m = assemble_primal(&case, &sessions, &PriceCurve::new(vec![1.0; 6])).unwrap();
        assert_eq!(m.program.num_binaries(), 2 * (6 + 4));
        assert_eq!(m.binaries(), m.program.binary_vars());
    }

    #[test]
    fn arbitrage_discharges_at_peak() {
        // cheap - peak - cheap - cheap; spread beats the round-trip loss
        let case = toy_case(4);
        let prices = PriceCurve::new(vec![1.0, 10.0, 1.0, 1.0]);
        let m = assemble_primal(&case, &[session(0, 4, 50.0, 60.0)], &prices).unwrap();
        let oracle = enumerate_oracle(&m.program, &SolveOptions::default()).unwrap().solution;
        let bnb = solve_misocp(&m.program, &BnbConfig::default()).unwrap();
        assert!(bnb.proved_optimal);
        let rel = (bnb.solution.objective_value - oracle.objective_value).abs() / oracle.objective_value.abs().max(1.0);
        assert!(rel < 1e-6);
        let s = &m.v2g.slots[0];
        let mut v = oracle.values.clone();
        m.finalize(&mut v);
        let v = &v;
        assert!(v[s[1].y_dis.0] > 0.5 && v[s[1].p_dis.0] > 19.0);
        assert!(s.iter().all(|x| v[x.y_dis.0] < 0.5 || x.t == 1));
        let rep = m.check_full_feasibility(v, 1e-6);
        assert!(rep.feasible, "{rep:?}");
        assert!(m.max_simultaneous_power(v) < 1e-9);
    }

    #[test]
    fn hook_matches_recomputed_draw() {
        let case = toy_case(2);
        let m = assemble_primal(&case, &[session(0, 2, 30.0, 40.0)], &PriceCurve::new(vec![1.0; 2])).unwrap();
        let values: Vec<f64> = (0..m.program.num_vars()).map(|i| 0.37 * i as f64).collect();
        let draw = m.ev_draw(&values);
        let s = m.v2g.slots[0][1];
        let want = (values[s.p_ch.0] / 0.8 - values[s.p_dis.0] * 0.8) / 1000.0;
        assert!((draw[1][1] - want).abs() < 1e-15);
        assert_eq!(draw[0][1], 0.0);
    }

    #[test]
    fn session_validation() {
        let mut ev = session(0, 5, 30.0, 100.0);
        assert!(matches!(ev.validate(4), Err(Error::SessionOutOfHorizon { .. })));
        ev.t_dep = 0;
        assert!(matches!(ev.validate(4), Err(Error::InvalidSession { .. })));
    }

    #[test]
    fn price_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prices.csv");
        let p = PriceCurve::new(vec![0.1, 2.5, 1.0 / 3.0]);
        p.write_csv(&path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap().lines().next(),
            Some("slot,price")
        );
        assert_eq!(PriceCurve::read_csv(&path).unwrap(), p);
    }
}
