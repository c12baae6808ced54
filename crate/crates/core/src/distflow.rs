//! Radial distribution network model and the relaxed branch-flow (DistFlow)
//! constraints over all time slots.
//!
//! Squared quantities are the decision variables: `w = V^2` per bus and slot,
//! `l = I^2` per branch and slot. Under this substitution the voltage-drop
//! equation is linear and the current definition relaxes to the rotated cone
//! `P^2 + Q^2 <= l * w_from`.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::conic::{ConicProgram, LinearExpr, VarId};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Active load per slot, per-unit.
    pub p_load: Vec<f64>,
    /// Reactive load per slot, per-unit.
    pub q_load: Vec<f64>,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub is_root: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub i_max: f64,
}

/// Generation cost `c2 P^2 + c1 P + c0` with `P` in MW.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct GenCost {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl From<[f64; 3]> for GenCost {
    fn from([c2, c1, c0]: [f64; 3]) -> Self {
        Self { c2, c1, c0 }
    }
}

impl From<GenCost> for [f64; 3] {
    fn from(c: GenCost) -> Self {
        [c.c2, c.c1, c.c0]
    }
}

impl GenCost {
    pub fn eval(&self, p_mw: f64) -> f64 {
        self.c2 * p_mw * p_mw + self.c1 * p_mw + self.c0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub cost: GenCost,
}

/// Radial grid with per-slot loads. All electrical quantities per-unit on
/// `base_mva`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub base_mva: f64,
    #[serde(rename = "T")]
    pub periods: usize,
    #[serde(rename = "dt_hours")]
    pub dt: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

/// Branch oriented away from the root, by bus index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrientedBranch {
    pub branch: usize,
    pub from: usize,
    pub to: usize,
}

/// Tree structure derived from a validated case.
#[derive(Clone, Debug)]
pub struct Topology {
    pub root: usize,
    pub oriented: Vec<OrientedBranch>,
    /// Generator index per bus index.
    pub generator_at: Vec<Option<usize>>,
    bus_index: HashMap<usize, usize>,
}

impl Topology {
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }
}

impl NetworkCase {
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn has_generator(&self, bus_id: usize) -> bool {
        self.generators.iter().any(|g| g.bus == bus_id)
    }

    /// Checks every data invariant and derives the rooted tree.
    pub fn topology(&self) -> Result<Topology> {
        if self.periods == 0 {
            return Err(Error::Invariant("T must be at least 1".into()));
        }
        if !(self.dt > 0.0) || !(self.base_mva > 0.0) {
            return Err(Error::Invariant("dt_hours and base_mva must be positive".into()));
        }
        let mut bus_index = HashMap::new();
        for (i, b) in self.buses.iter().enumerate() {
            if bus_index.insert(b.id, i).is_some() {
                return Err(Error::Invariant(format!("duplicate bus id {}", b.id)));
            }
            if b.p_load.len() != self.periods || b.q_load.len() != self.periods {
                return Err(Error::Invariant(format!(
                    "bus {} has load profiles of length {}/{} for T = {}",
                    b.id,
                    b.p_load.len(),
                    b.q_load.len(),
                    self.periods
                )));
            }
            if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
                return Err(Error::Invariant(format!("bus {} voltage bounds", b.id)));
            }
        }
        let roots: Vec<usize> = (0..self.buses.len()).filter(|&i| self.buses[i].is_root).collect();
        let root = match roots.as_slice() {
            [] => return Err(Error::MissingRoot),
            [r] => *r,
            _ => return Err(Error::Invariant("more than one root bus".into())),
        };
        let rb = &self.buses[root];
        if !(rb.v_min <= 1.0 && 1.0 <= rb.v_max) {
            return Err(Error::Invariant("root voltage bounds exclude 1.0 p.u.".into()));
        }

        let n = self.buses.len();
        if self.branches.len() + 1 != n {
            return Err(Error::NotRadial(format!(
                "{} branches for {} buses",
                self.branches.len(),
                n
            )));
        }
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, br) in self.branches.iter().enumerate() {
            let (Some(&f), Some(&t)) = (bus_index.get(&br.from), bus_index.get(&br.to)) else {
                return Err(Error::Invariant(format!(
                    "branch {}-{} references an unknown bus",
                    br.from, br.to
                )));
            };
            if f == t {
                return Err(Error::NotRadial(format!("self-loop at bus {}", br.from)));
            }
            if !(br.r >= 0.0 && br.x >= 0.0 && br.i_max > 0.0) {
                return Err(Error::Invariant(format!("branch {}-{} parameters", br.from, br.to)));
            }
            adj[f].push((t, k));
            adj[t].push((f, k));
        }

        let mut seen = vec![false; n];
        let mut oriented = Vec::with_capacity(self.branches.len());
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(i) = queue.pop_front() {
            for &(j, k) in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    oriented.push(OrientedBranch {
                        branch: k,
                        from: i,
                        to: j,
                    });
                    queue.push_back(j);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::NotRadial(format!(
                "bus {} unreachable from the root (cycle elsewhere)",
                self.buses[i].id
            )));
        }
        oriented.sort_by_key(|o| o.branch);

        let mut generator_at = vec![None; n];
        for (g, gen) in self.generators.iter().enumerate() {
            let Some(&i) = bus_index.get(&gen.bus) else {
                return Err(Error::Invariant(format!("generator at unknown bus {}", gen.bus)));
            };
            if generator_at[i].replace(g).is_some() {
                return Err(Error::Invariant(format!("two generators at bus {}", gen.bus)));
            }
            if !(gen.p_min <= gen.p_max && gen.q_min <= gen.q_max && gen.cost.c2 >= 0.0) {
                return Err(Error::Invariant(format!("generator at bus {} limits", gen.bus)));
            }
        }

        Ok(Topology {
            root,
            oriented,
            generator_at,
            bus_index,
        })
    }

    /// Keeps the first `periods` slots of every load profile.
    pub fn truncated(&self, periods: usize) -> Result<NetworkCase> {
        if periods == 0 || periods > self.periods {
            return Err(Error::Invariant(format!(
                "cannot truncate horizon {} to {}",
                self.periods, periods
            )));
        }
        let mut c = self.clone();
        c.periods = periods;
        for b in &mut c.buses {
            b.p_load.truncate(periods);
            b.q_load.truncate(periods);
        }
        Ok(c)
    }
}

/// Per-(bus, slot) affine net active injection drawn by EV chargers, per-unit.
#[derive(Clone, Debug)]
pub struct InjectionHooks {
    hooks: Vec<Vec<LinearExpr>>,
}

impl InjectionHooks {
    pub fn zero(num_buses: usize, periods: usize) -> Self {
        Self {
            hooks: vec![vec![LinearExpr::new(); periods]; num_buses],
        }
    }

    pub fn get(&self, bus: usize, t: usize) -> &LinearExpr {
        &self.hooks[bus][t]
    }

    pub fn add(&mut self, bus: usize, t: usize, expr: &LinearExpr) {
        self.hooks[bus][t].add_scaled(expr, 1.0);
    }

    pub fn num_buses(&self) -> usize {
        self.hooks.len()
    }
}

/// Variable ids of the OPF fragment, indexed `[bus][t]`, `[branch][t]` and
/// `[generator][t]`.
#[derive(Clone, Debug)]
pub struct OpfVarMap {
    pub w: Vec<Vec<VarId>>,
    pub p_gen: Vec<Vec<Option<VarId>>>,
    pub q_gen: Vec<Vec<Option<VarId>>>,
    pub l: Vec<Vec<VarId>>,
    pub p_flow: Vec<Vec<VarId>>,
    pub q_flow: Vec<Vec<VarId>>,
    /// Epigraph of `(base * P_gen)^2`, only for generators with `c2 > 0`.
    pub cost_epigraph: Vec<Vec<Option<VarId>>>,
    pub topology: Topology,
}

/// Variables, constraints and the generation-cost part of the objective.
#[derive(Clone, Debug)]
pub struct OpfFragment {
    pub map: OpfVarMap,
    pub cost: LinearExpr,
}

/// Adds the DistFlow constraints of `case` to `prog`. `hooks` carries the EV
/// net active draw per bus and slot (zero where no station).
pub fn build_opf(prog: &mut ConicProgram, case: &NetworkCase, hooks: &InjectionHooks) -> Result<OpfFragment> {
    let topo = case.topology()?;
    let nb = case.buses.len();
    let nt = case.periods;
    if hooks.num_buses() != nb {
        return Err(Error::Invariant("injection hooks sized for another case".into()));
    }

    let mut w = Vec::with_capacity(nb);
    let mut p_gen = Vec::with_capacity(nb);
    let mut q_gen = Vec::with_capacity(nb);
    for (i, bus) in case.buses.iter().enumerate() {
        let (lo, hi) = if i == topo.root {
            (1.0, 1.0)
        } else {
            (bus.v_min * bus.v_min, bus.v_max * bus.v_max)
        };
        w.push(
            (0..nt)
                .map(|_| prog.add_variable(lo, hi, false))
                .collect::<Result<Vec<_>>>()?,
        );
        let gen = topo.generator_at[i].map(|g| &case.generators[g]);
        let mut pg = Vec::with_capacity(nt);
        let mut qg = Vec::with_capacity(nt);
        for _ in 0..nt {
            match gen {
                Some(g) => {
                    pg.push(Some(prog.add_variable(g.p_min, g.p_max, false)?));
                    qg.push(Some(prog.add_variable(g.q_min, g.q_max, false)?));
                }
                None => {
                    pg.push(None);
                    qg.push(None);
                }
            }
        }
        p_gen.push(pg);
        q_gen.push(qg);
    }

    let mut l = Vec::with_capacity(case.branches.len());
    let mut p_flow = Vec::with_capacity(case.branches.len());
    let mut q_flow = Vec::with_capacity(case.branches.len());
    for br in &case.branches {
        let mut lk = Vec::with_capacity(nt);
        let mut pk = Vec::with_capacity(nt);
        let mut qk = Vec::with_capacity(nt);
        for _ in 0..nt {
            lk.push(prog.add_variable(0.0, br.i_max * br.i_max, false)?);
            pk.push(prog.add_variable(f64::NEG_INFINITY, f64::INFINITY, false)?);
            qk.push(prog.add_variable(f64::NEG_INFINITY, f64::INFINITY, false)?);
        }
        l.push(lk);
        p_flow.push(pk);
        q_flow.push(qk);
    }

    let mut cost = LinearExpr::new();
    let mut cost_epigraph = Vec::with_capacity(case.generators.len());
    for g in &case.generators {
        let i = topo.bus_index(g.bus).expect("validated");
        let mut epi = Vec::with_capacity(nt);
        for t in 0..nt {
            let pg = p_gen[i][t].expect("generator bus");
            cost.add_term(pg, g.cost.c1 * case.base_mva);
            cost.add_constant(g.cost.c0);
            if g.cost.c2 > 0.0 {
                let e = prog.add_variable(0.0, f64::INFINITY, false)?;
                prog.add_rotated_soc(
                    vec![LinearExpr::term(pg, case.base_mva)],
                    LinearExpr::var(e),
                    LinearExpr::constant(1.0),
                )?;
                cost.add_term(e, g.cost.c2);
                epi.push(Some(e));
            } else {
                epi.push(None);
            }
        }
        cost_epigraph.push(epi);
    }

    for t in 0..nt {
        for (j, bus) in case.buses.iter().enumerate() {
            // load + outflows + EV draw - (inflows - losses) - generation = 0
            let mut active = LinearExpr::constant(bus.p_load[t]);
            let mut reactive = LinearExpr::constant(bus.q_load[t]);
            for ob in &topo.oriented {
                let br = &case.branches[ob.branch];
                let k = ob.branch;
                if ob.from == j {
                    active.add_term(p_flow[k][t], 1.0);
                    reactive.add_term(q_flow[k][t], 1.0);
                } else if ob.to == j {
                    active.add_term(p_flow[k][t], -1.0);
                    active.add_term(l[k][t], br.r);
                    reactive.add_term(q_flow[k][t], -1.0);
                    reactive.add_term(l[k][t], br.x);
                }
            }
            active.add_scaled(hooks.get(j, t), 1.0);
            if let Some(pg) = p_gen[j][t] {
                active.add_term(pg, -1.0);
            }
            if let Some(qg) = q_gen[j][t] {
                reactive.add_term(qg, -1.0);
            }
            prog.add_eq(active)?;
            prog.add_eq(reactive)?;
        }
        for ob in &topo.oriented {
            let br = &case.branches[ob.branch];
            let k = ob.branch;
            // w_i - w_j - 2(R P + X Q) + (R^2 + X^2) l = 0
            prog.add_eq(LinearExpr::from_terms(
                [
                    (w[ob.from][t], 1.0),
                    (w[ob.to][t], -1.0),
                    (p_flow[k][t], -2.0 * br.r),
                    (q_flow[k][t], -2.0 * br.x),
                    (l[k][t], br.r * br.r + br.x * br.x),
                ],
                0.0,
            ))?;
            prog.add_rotated_soc(
                vec![LinearExpr::var(p_flow[k][t]), LinearExpr::var(q_flow[k][t])],
                LinearExpr::var(l[k][t]),
                LinearExpr::var(w[ob.from][t]),
            )?;
        }
    }

    Ok(OpfFragment {
        map: OpfVarMap {
            w,
            p_gen,
            q_gen,
            l,
            p_flow,
            q_flow,
            cost_epigraph,
            topology: topo,
        },
        cost,
    })
}

impl OpfVarMap {
    /// True generation cost `sum_t sum_g c(P_gen)`, computed from the
    /// generator outputs (not the epigraph variables).
    pub fn generation_cost(&self, case: &NetworkCase, values: &[f64]) -> f64 {
        let mut total = 0.0;
        for g in &case.generators {
            let i = self.topology.bus_index(g.bus).expect("validated");
            for t in 0..case.periods {
                let pg = values[self.p_gen[i][t].expect("generator bus").0];
                total += g.cost.eval(pg * case.base_mva);
            }
        }
        total
    }

    /// Sets every cost epigraph variable to its lower envelope `(base P)^2`,
    /// which keeps the point feasible and makes the linear objective equal to
    /// the true generation cost.
    pub fn tighten_epigraphs(&self, case: &NetworkCase, values: &mut [f64]) {
        for (g, gen) in case.generators.iter().enumerate() {
            let i = self.topology.bus_index(gen.bus).expect("validated");
            for t in 0..case.periods {
                if let Some(e) = self.cost_epigraph[g][t] {
                    let p = values[self.p_gen[i][t].expect("generator bus").0] * case.base_mva;
                    values[e.0] = p * p;
                }
            }
        }
    }
}

/// Worst violation of each OPF constraint family.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpfViolation {
    pub active_balance: f64,
    pub reactive_balance: f64,
    pub voltage_drop: f64,
    /// Positive part of `P^2 + Q^2 - l w`.
    pub cone: f64,
    pub voltage_bounds: f64,
    pub current_bounds: f64,
    pub generation_bounds: f64,
    /// `max |P^2 + Q^2 - l w|`: zero when the relaxation is exact.
    pub cone_gap: f64,
    pub feasible: bool,
}

impl OpfViolation {
    pub fn max(&self) -> f64 {
        [
            self.active_balance,
            self.reactive_balance,
            self.voltage_drop,
            self.cone,
            self.voltage_bounds,
            self.current_bounds,
            self.generation_bounds,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Re-evaluates every OPF constraint from raw values and case data.
///
/// `ev_draw[bus][t]` is the EV net active draw in per-unit; `None` means no
/// EVs anywhere.
pub fn check_opf_feasibility(
    case: &NetworkCase,
    map: &OpfVarMap,
    values: &[f64],
    ev_draw: Option<&[Vec<f64>]>,
    tol: f64,
) -> OpfViolation {
    let topo = &map.topology;
    let x = |v: VarId| values[v.0];
    let mut r = OpfViolation::default();
    for t in 0..case.periods {
        for (j, bus) in case.buses.iter().enumerate() {
            let mut active = bus.p_load[t] + ev_draw.map_or(0.0, |d| d[j][t]);
            let mut reactive = bus.q_load[t];
            for ob in &topo.oriented {
                let br = &case.branches[ob.branch];
                let k = ob.branch;
                if ob.from == j {
                    active += x(map.p_flow[k][t]);
                    reactive += x(map.q_flow[k][t]);
                } else if ob.to == j {
                    active -= x(map.p_flow[k][t]) - br.r * x(map.l[k][t]);
                    reactive -= x(map.q_flow[k][t]) - br.x * x(map.l[k][t]);
                }
            }
            if let Some(pg) = map.p_gen[j][t] {
                active -= x(pg);
            }
            if let Some(qg) = map.q_gen[j][t] {
                reactive -= x(qg);
            }
            r.active_balance = r.active_balance.max(active.abs());
            r.reactive_balance = r.reactive_balance.max(reactive.abs());

            let w = x(map.w[j][t]);
            let (lo, hi) = if j == topo.root {
                (1.0, 1.0)
            } else {
                (bus.v_min * bus.v_min, bus.v_max * bus.v_max)
            };
            r.voltage_bounds = r.voltage_bounds.max(lo - w).max(w - hi);

            if let Some(g) = topo.generator_at[j].map(|g| &case.generators[g]) {
                let pg = x(map.p_gen[j][t].expect("generator bus"));
                let qg = x(map.q_gen[j][t].expect("generator bus"));
                r.generation_bounds = r
                    .generation_bounds
                    .max(g.p_min - pg)
                    .max(pg - g.p_max)
                    .max(g.q_min - qg)
                    .max(qg - g.q_max);
            }
        }
        for ob in &topo.oriented {
            let br = &case.branches[ob.branch];
            let k = ob.branch;
            let (p, q, l) = (x(map.p_flow[k][t]), x(map.q_flow[k][t]), x(map.l[k][t]));
            let (wi, wj) = (x(map.w[ob.from][t]), x(map.w[ob.to][t]));
            let drop = wi - wj - 2.0 * (br.r * p + br.x * q) + (br.r * br.r + br.x * br.x) * l;
            r.voltage_drop = r.voltage_drop.max(drop.abs());
            let excess = p * p + q * q - l * wi;
            r.cone = r.cone.max(excess);
            r.cone_gap = r.cone_gap.max(excess.abs());
            r.current_bounds = r.current_bounds.max(-l).max(l - br.i_max * br.i_max);
        }
    }
    r.voltage_bounds = r.voltage_bounds.max(0.0);
    r.generation_bounds = r.generation_bounds.max(0.0);
    r.current_bounds = r.current_bounds.max(0.0);
    r.feasible = r.max() <= tol;
    r
}
