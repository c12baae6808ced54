//! Branch-and-bound for mixed-binary SOCPs over the continuous backend.
//!
//! Best-bound node selection with depth-first plunging: after every branching
//! the child on the rounding side of the branched value is processed at once,
//! the sibling goes to the queue. Until the first incumbent exists, siblings
//! are kept on a stack instead, so a dead dive backtracks depth-first rather
//! than restarting from the best bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::time::Instant;

use crate::conic::{
    fractionality, solve_continuous, solve_continuous_retrying, ConicProgram, LinearExpr, Solution, SolveOptions,
    SolveStatus, VarId,
};
use crate::error::{Error, Result};

/// Largest binary count [`enumerate_oracle`] accepts.
pub const ENUMERATION_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Branching {
    #[default]
    MostFractional,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NodeOrder {
    #[default]
    BestBound,
}

#[derive(Clone, Debug)]
pub struct BnbConfig {
    pub int_tol: f64,
    pub rel_gap_tol: f64,
    pub node_limit: usize,
    /// Seconds.
    pub time_limit: Option<f64>,
    pub branching: Branching,
    pub node_order: NodeOrder,
    pub solve: SolveOptions,
    /// Keep one [`NodeLogEntry`] per explored node.
    pub log_nodes: bool,
    /// Binaries branched on before any other; the rest are only branched
    /// on once all of these are integral.
    pub branch_priority: Vec<VarId>,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            int_tol: 1e-6,
            rel_gap_tol: 1e-6,
            node_limit: 1_000_000,
            time_limit: None,
            branching: Branching::MostFractional,
            node_order: NodeOrder::BestBound,
            solve: SolveOptions::default(),
            log_nodes: false,
            branch_priority: Vec::new(),
        }
    }
}

impl BnbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.int_tol >= 0.0 && self.int_tol < 0.5) {
            return Err(Error::Invariant(format!("int_tol {} not in [0, 0.5)", self.int_tol)));
        }
        if !(self.rel_gap_tol >= 0.0) {
            return Err(Error::Invariant(format!("rel_gap_tol {} < 0", self.rel_gap_tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BnbNode {
    /// Fixings on binary variables, in branching order.
    pub var_fixings: Vec<(VarId, bool)>,
    /// Valid lower bound for every point in the subtree.
    pub parent_bound: f64,
    pub depth: usize,
    id: u64,
    retried: bool,
}

impl PartialEq for BnbNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for BnbNode {}
impl PartialOrd for BnbNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for BnbNode {
    // BinaryHeap is a max-heap: smallest bound, then oldest node, comes out first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .parent_bound
            .total_cmp(&self.parent_bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeLogEntry {
    pub node: usize,
    pub depth: usize,
    /// Relaxation objective, NaN when the relaxation had no optimum.
    pub bound: f64,
    pub parent_bound: f64,
    /// Incumbent after processing the node, `inf` if none yet.
    pub incumbent: f64,
    pub frac_count: usize,
}

#[derive(Clone, Debug)]
pub struct BnbResult {
    pub solution: Solution,
    pub nodes_explored: usize,
    pub proved_optimal: bool,
    /// Best lower bound known at termination.
    pub best_bound: f64,
    /// Nodes pruned after two failed relaxation solves.
    pub numerical_prunes: usize,
    /// Objective of every accepted incumbent, in order.
    pub incumbent_history: Vec<f64>,
    pub node_log: Vec<NodeLogEntry>,
}

impl BnbResult {
    /// Writes `node,depth,bound,incumbent,frac_count`.
    pub fn write_node_log<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node", "depth", "bound", "incumbent", "frac_count"])?;
        for e in &self.node_log {
            w.write_record([
                e.node.to_string(),
                e.depth.to_string(),
                e.bound.to_string(),
                e.incumbent.to_string(),
                e.frac_count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn gap_closed(bound: f64, incumbent: f64, tol: f64) -> bool {
    (incumbent - bound) / incumbent.abs().max(1.0) <= tol
}

/// Most fractional free binary, ties to the lowest id. Also returns how many
/// binaries are fractional.
fn pick_branch(binaries: &[VarId], values: &[f64], int_tol: f64) -> (Option<VarId>, usize) {
    let mut best: Option<(VarId, f64)> = None;
    let mut count = 0;
    for &v in binaries {
        let f = fractionality(values[v.0]);
        if f > int_tol {
            count += 1;
            if best.is_none_or(|(_, bf)| f > bf) {
                best = Some((v, f));
            }
        }
    }
    (best.map(|(v, _)| v), count)
}

/// Binaries that can be fixed at their current value for the whole subtree:
/// moving one to the other end costs at least its bound multiplier, which
/// already pushes the dual bound past `cutoff`. Returns the variable, the
/// value to fix and the bound of the discarded side.
fn reduced_cost_fixings(binaries: &[VarId], sol: &Solution, cutoff: f64, int_tol: f64) -> Vec<(VarId, bool, f64)> {
    let d = sol.dual_objective.min(sol.objective_value);
    if sol.bound_duals.is_empty() || !d.is_finite() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for &v in binaries {
        let (z_lo, z_hi) = sol.bound_duals[v.0];
        let x = sol.values[v.0];
        if x <= int_tol && d + z_lo >= cutoff {
            out.push((v, false, d + z_lo));
        } else if x >= 1.0 - int_tol && d + z_hi >= cutoff {
            out.push((v, true, d + z_hi));
        }
    }
    out
}

/// Rounds binaries of a relaxation solution when that is free: every row
/// touching the binary stays feasible and the objective does not increase.
/// Interior-point answers sit in the middle of optimal faces, so binaries
/// that could take an integer value at no cost often come back fractional.
struct NeutralRounder {
    /// Per binary: (eq rows, ineq rows, cones) mentioning it.
    rows: Vec<(VarId, Vec<usize>, Vec<usize>, Vec<usize>)>,
}

impl NeutralRounder {
    fn new(p: &ConicProgram, binaries: &[VarId]) -> Self {
        let mut slot = vec![usize::MAX; p.num_vars()];
        let mut rows: Vec<_> = binaries
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                slot[v.0] = k;
                (v, Vec::new(), Vec::new(), Vec::new())
            })
            .collect();
        let touch = |e: &LinearExpr, f: &mut dyn FnMut(usize)| {
            for &(v, c) in e.terms() {
                if c != 0.0 && slot[v.0] != usize::MAX {
                    f(slot[v.0]);
                }
            }
        };
        for (i, e) in p.eq_constraints().iter().enumerate() {
            touch(e, &mut |k| rows[k].1.push(i));
        }
        for (i, e) in p.ineq_constraints().iter().enumerate() {
            touch(e, &mut |k| rows[k].2.push(i));
        }
        for (i, c) in p.soc_constraints().iter().enumerate() {
            for e in c.x.iter().chain([&c.u, &c.v]) {
                touch(e, &mut |k| rows[k].3.push(i));
            }
        }
        for r in &mut rows {
            r.3.dedup();
        }
        Self { rows }
    }

    fn apply(&self, p: &ConicProgram, values: &mut [f64], int_tol: f64, feas_tol: f64) {
        for (v, eqs, ineqs, cones) in &self.rows {
            let old = values[v.0];
            if fractionality(old) <= int_tol {
                continue;
            }
            let near = old.round();
            for target in [near, 1.0 - near] {
                if target < p.lower(*v) || target > p.upper(*v) {
                    continue;
                }
                if p.objective().coefficient(*v) * (target - old) > 0.0 {
                    continue;
                }
                values[v.0] = target;
                let ok = eqs
                    .iter()
                    .all(|&i| p.eq_constraints()[i].eval(values).abs() <= feas_tol)
                    && ineqs.iter().all(|&i| p.ineq_constraints()[i].eval(values) <= feas_tol)
                    && cones
                        .iter()
                        .all(|&i| p.soc_constraints()[i].violation(values) <= feas_tol);
                if ok {
                    break;
                }
                values[v.0] = old;
            }
        }
    }
}

fn with_fixings(base: &ConicProgram, fixings: &[(VarId, bool)]) -> Result<ConicProgram> {
    let mut p = base.clone();
    for &(v, up) in fixings {
        p.fix(v, if up { 1.0 } else { 0.0 })?;
    }
    Ok(p)
}

/// Re-solves with every binary pinned at its rounded value so the incumbent
/// is exactly integral.
fn polish(base: &ConicProgram, binaries: &[VarId], values: &[f64], opts: &SolveOptions) -> Result<Solution> {
    let mut p = base.clone();
    for &v in binaries {
        p.fix(v, values[v.0].round().clamp(0.0, 1.0))?;
    }
    solve_continuous_retrying(&p, opts)
}

/// Solves the MISOCP `p` to `cfg.rel_gap_tol`.
pub fn solve_misocp(p: &ConicProgram, cfg: &BnbConfig) -> Result<BnbResult> {
    solve_misocp_from(p, cfg, None)
}

/// As [`solve_misocp`], seeded with a known point. The point becomes the
/// first incumbent if it is integral and feasible; otherwise it is ignored.
pub fn solve_misocp_from(p: &ConicProgram, cfg: &BnbConfig, seed: Option<&[f64]>) -> Result<BnbResult> {
    cfg.validate()?;
    let start = Instant::now();
    let base = p.continuous_relaxation();
    let binaries = p.binary_vars();
    let rounder = NeutralRounder::new(&base, &binaries);
    let secondary: Vec<VarId> = binaries
        .iter()
        .copied()
        .filter(|v| !cfg.branch_priority.contains(v))
        .collect();

    let mut heap: BinaryHeap<BnbNode> = BinaryHeap::new();
    let mut next_id = 1u64;
    let mut plunge = Some(BnbNode {
        var_fixings: Vec::new(),
        parent_bound: f64::NEG_INFINITY,
        depth: 0,
        id: 0,
        retried: false,
    });

    let mut incumbent: Option<Solution> = None;
    let mut inc_obj = f64::INFINITY;
    let mut history = Vec::new();
    if let Some(x) = seed.filter(|x| {
        x.len() == p.num_vars()
            && binaries.iter().all(|v| fractionality(x[v.0]) <= cfg.int_tol)
            && p.max_violation(x) <= cfg.solve.feas_tol
    }) {
        inc_obj = p.objective_value(x);
        history.push(inc_obj);
        incumbent = Some(Solution::primal(x.to_vec(), inc_obj, 0.0));
    }
    let mut log = Vec::new();
    let mut explored = 0usize;
    let mut numerical_prunes = 0usize;
    let mut limit_status: Option<SolveStatus> = None;
    let mut unbounded = false;
    let mut closed_bound = f64::INFINITY;
    // lowest bound over subtrees removed by reduced-cost fixing
    let mut rc_bound = f64::INFINITY;
    // depth-first backlog used until the first incumbent exists
    let mut stack: Vec<BnbNode> = Vec::new();

    loop {
        let open_bound = heap
            .peek()
            .map(|n| n.parent_bound)
            .into_iter()
            .chain(plunge.as_ref().map(|n| n.parent_bound))
            .chain(stack.iter().map(|n| n.parent_bound))
            .fold(f64::INFINITY, f64::min);
        if incumbent.is_some() && gap_closed(open_bound, inc_obj, cfg.rel_gap_tol) {
            closed_bound = open_bound;
            break;
        }
        if explored >= cfg.node_limit {
            limit_status = Some(SolveStatus::IterationLimit);
            break;
        }
        let elapsed = start.elapsed().as_secs_f64();
        if cfg.time_limit.is_some_and(|t| elapsed >= t) {
            limit_status = Some(SolveStatus::TimeLimit);
            break;
        }
        let Some(node) = plunge.take().or_else(|| stack.pop()).or_else(|| heap.pop()) else {
            break;
        };
        if incumbent.is_some() && gap_closed(node.parent_bound, inc_obj, cfg.rel_gap_tol) {
            continue;
        }

        let mut opts = if node.retried {
            cfg.solve.tightened()
        } else {
            cfg.solve.clone()
        };
        opts.time_limit = cfg.time_limit.map(|t| (t - elapsed).max(1e-3));
        let relaxed = with_fixings(&base, &node.var_fixings)?;
        let mut sol = solve_continuous(&relaxed, &opts)?;
        explored += 1;
        if sol.is_optimal() {
            rounder.apply(&relaxed, &mut sol.values, cfg.int_tol, cfg.solve.feas_tol);
        }

        let mut entry = NodeLogEntry {
            node: explored - 1,
            depth: node.depth,
            bound: f64::NAN,
            parent_bound: node.parent_bound,
            incumbent: inc_obj,
            frac_count: 0,
        };

        match sol.status {
            SolveStatus::Optimal => {
                entry.bound = sol.objective_value;
                let bound = sol.objective_value.max(node.parent_bound);
                let (first, n1) = pick_branch(&cfg.branch_priority, &sol.values, cfg.int_tol);
                let (second, n2) = pick_branch(&secondary, &sol.values, cfg.int_tol);
                let (branch, frac_count) = (first.or(second), n1 + n2);
                entry.frac_count = frac_count;
                if incumbent.is_some() && gap_closed(bound, inc_obj, cfg.rel_gap_tol) {
                    // pruned by bound
                } else if let Some(v) = branch {
                    let mut inherited = node.var_fixings.clone();
                    if incumbent.is_some() {
                        let cutoff = inc_obj - cfg.rel_gap_tol * inc_obj.abs().max(1.0);
                        for (u, up, b) in reduced_cost_fixings(&binaries, &sol, cutoff, cfg.int_tol) {
                            inherited.push((u, up));
                            rc_bound = rc_bound.min(b);
                        }
                    }
                    let up_first = sol.values[v.0] >= 0.5;
                    let mut children = [false, true].map(|up| {
                        let mut fix = inherited.clone();
                        fix.push((v, up));
                        BnbNode {
                            var_fixings: fix,
                            parent_bound: bound,
                            depth: node.depth + 1,
                            id: 0,
                            retried: false,
                        }
                    });
                    for c in &mut children {
                        c.id = next_id;
                        next_id += 1;
                    }
                    let [down, up] = children;
                    let (dive, other) = if up_first { (up, down) } else { (down, up) };
                    if incumbent.is_none() {
                        stack.push(other);
                    } else {
                        heap.push(other);
                    }
                    plunge = Some(dive);
                } else {
                    let polished = polish(&base, &binaries, &sol.values, &opts)?;
                    let candidate = if polished.is_optimal() {
                        Some(polished)
                    } else {
                        let mut values = sol.values.clone();
                        for &v in &binaries {
                            values[v.0] = values[v.0].round();
                        }
                        (p.max_violation(&values) <= cfg.solve.feas_tol)
                            .then(|| Solution::primal(values.clone(), p.objective_value(&values), sol.solve_time))
                    };
                    match candidate {
                        Some(c) if c.objective_value < inc_obj => {
                            inc_obj = c.objective_value;
                            history.push(inc_obj);
                            incumbent = Some(c);
                        }
                        Some(_) => {}
                        None => numerical_prunes += 1,
                    }
                }
            }
            SolveStatus::Infeasible => {}
            SolveStatus::Unbounded => {
                unbounded = true;
                break;
            }
            SolveStatus::TimeLimit => {
                heap.push(node);
                limit_status = Some(SolveStatus::TimeLimit);
                break;
            }
            SolveStatus::NumericalFailure | SolveStatus::IterationLimit => {
                if node.retried {
                    log::warn!("pruning node at depth {} after repeated solver failure", node.depth);
                    numerical_prunes += 1;
                } else {
                    heap.push(BnbNode { retried: true, ..node });
                }
            }
        }
        if incumbent.is_some() && !stack.is_empty() {
            heap.extend(stack.drain(..));
        }
        entry.incumbent = inc_obj;
        if cfg.log_nodes {
            log.push(entry);
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    let open_bound = heap
        .iter()
        .map(|n| n.parent_bound)
        .chain(plunge.as_ref().map(|n| n.parent_bound))
        .chain(stack.iter().map(|n| n.parent_bound))
        .fold(closed_bound.min(rc_bound), f64::min);
    let proved_optimal = incumbent.is_some() && limit_status.is_none() && !unbounded;
    let best_bound = open_bound.min(inc_obj);

    let solution = match (incumbent, unbounded) {
        (_, true) => Solution::failed(SolveStatus::Unbounded, elapsed),
        (Some(mut s), false) => {
            s.status = limit_status.unwrap_or(SolveStatus::Optimal);
            s.solve_time = elapsed;
            s
        }
        (None, false) => Solution::failed(limit_status.unwrap_or(SolveStatus::Infeasible), elapsed),
    };
    Ok(BnbResult {
        solution,
        nodes_explored: explored,
        proved_optimal,
        best_bound,
        numerical_prunes,
        incumbent_history: history,
        node_log: log,
    })
}

/// Exhaustive reference solver: every 0/1 assignment of the binaries is
/// solved as a continuous program.
pub fn enumerate_oracle(p: &ConicProgram, opts: &SolveOptions) -> Result<BnbResult> {
    let binaries = p.binary_vars();
    if binaries.len() > ENUMERATION_LIMIT {
        return Err(Error::TooManyBinaries {
            count: binaries.len(),
            limit: ENUMERATION_LIMIT,
        });
    }
    let start = Instant::now();
    let base = p.continuous_relaxation();
    let mut best: Option<Solution> = None;
    let combos = 1usize << binaries.len();
    let mut history = Vec::new();
    for mask in 0..combos {
        let fixings: Vec<(VarId, bool)> = binaries
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, mask >> i & 1 == 1))
            .collect();
        let sol = solve_continuous_retrying(&with_fixings(&base, &fixings)?, opts)?;
        if sol.is_optimal() && best.as_ref().is_none_or(|b| sol.objective_value < b.objective_value) {
            history.push(sol.objective_value);
            best = Some(sol);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let proved = best.is_some();
    let best_bound = best.as_ref().map_or(f64::INFINITY, |b| b.objective_value);
    let solution = match best {
        Some(mut s) => {
            s.solve_time = elapsed;
            s
        }
        None => Solution::failed(SolveStatus::Infeasible, elapsed),
    };
    Ok(BnbResult {
        solution,
        nodes_explored: combos,
        proved_optimal: proved,
        best_bound,
        numerical_prunes: 0,
        incumbent_history: history,
        node_log: Vec::new(),
    })
}
