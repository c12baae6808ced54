//! Stage 2: repair a DC warm start by solving the original program inside
//! an L1 ball around the binaries that stage 1 settled.
//!
//! For each settled binary `i` an indicator `delta_i` marks whether it moved
//! (`y_i <= delta_i` if it settled at 0, `1 - y_i <= delta_i` at 1), and
//! `sum delta_i <= Delta` caps the number of flips. Unsettled binaries stay
//! free.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bnb::{solve_misocp, solve_misocp_from, BnbConfig};
use crate::conic::{ConicProgram, LinearExpr, Solution, SolveStatus, VarId};
use crate::dc::{run_dc, DcConfig, DcOutcome, DcStatus};
use crate::error::{Error, Result};

/// Binaries split by their stage-1 value.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarmStart {
    /// Settled at 0.
    pub s0: Vec<VarId>,
    /// Settled at 1.
    pub s1: Vec<VarId>,
    pub leftover: Vec<VarId>,
}

impl WarmStart {
    pub fn settled(&self) -> usize {
        self.s0.len() + self.s1.len()
    }

    /// Number of settled binaries whose rounded value differs from the
    /// warm start.
    pub fn flip_count(&self, values: &[f64]) -> usize {
        let off0 = self.s0.iter().filter(|v| values[v.0].round() != 0.0).count();
        let off1 = self.s1.iter().filter(|v| values[v.0].round() != 1.0).count();
        off0 + off1
    }
}

/// `y_hat[k]` belongs to `binaries[k]`. Values within `tol` of 0 or 1 are
/// settled; everything else (including exact ties at 0.5) is leftover.
pub fn build_warm_start(binaries: &[VarId], y_hat: &[f64], tol: f64) -> WarmStart {
    let mut ws = WarmStart::default();
    for (&v, &y) in binaries.iter().zip(y_hat) {
        if y <= tol {
            ws.s0.push(v);
        } else if y >= 1.0 - tol {
            ws.s1.push(v);
        } else {
            ws.leftover.push(v);
        }
    }
    ws
}

/// Copy of `p` with the trust-region indicators and budget `delta`. Returns
/// the program and the indicator ids.
pub fn build_subproblem(p: &ConicProgram, ws: &WarmStart, delta: usize) -> Result<(ConicProgram, Vec<VarId>)> {
    let mut sub = p.clone();
    let mut indicators = Vec::with_capacity(ws.settled());
    let mut budget = LinearExpr::constant(-(delta as f64));
    for &v in &ws.s0 {
        let d = sub.add_variable(0.0, 1.0, true)?;
        sub.add_ineq(LinearExpr::from_terms([(v, 1.0), (d, -1.0)], 0.0))?;
        budget.add_term(d, 1.0);
        indicators.push(d);
    }
    for &v in &ws.s1 {
        let d = sub.add_variable(0.0, 1.0, true)?;
        sub.add_ineq(LinearExpr::from_terms([(v, -1.0), (d, -1.0)], 1.0))?;
        budget.add_term(d, 1.0);
        indicators.push(d);
    }
    if !indicators.is_empty() {
        sub.add_ineq(budget)?;
    }
    Ok((sub, indicators))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Escalation {
    /// Only the configured radius is tried.
    Disabled,
    /// `[Delta, 2 Delta + 1, |S|]`.
    Default,
    /// Radii tried after the configured one, strictly increasing.
    Fixed(Vec<usize>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrustRegionConfig {
    pub delta: usize,
    pub closeness_tol: f64,
    pub escalation: Escalation,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            delta: 2,
            closeness_tol: 1e-5,
            escalation: Escalation::Default,
        }
    }
}

impl TrustRegionConfig {
    pub fn with_delta(delta: usize) -> Self {
        Self {
            delta,
            ..Self::default()
        }
    }

    /// Radii to try, in order, for a warm start with `settled` entries.
    pub fn schedule(&self, settled: usize) -> Result<Vec<usize>> {
        let mut s = vec![self.delta];
        match &self.escalation {
            Escalation::Disabled => {}
            Escalation::Default => {
                s.push(2 * self.delta + 1);
                s.push(settled);
            }
            Escalation::Fixed(more) => {
                if more.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Invariant("escalation radii must increase".into()));
                }
                s.extend(more);
            }
        }
        // radii past |S| are all equivalent to |S|
        let mut out: Vec<usize> = Vec::new();
        for d in s {
            let d = d.min(settled.max(self.delta));
            if out.last().is_none_or(|&l| d > l) {
                out.push(d);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageOutcome {
    pub objective: f64,
    /// Filled in by callers that know the cost split.
    pub c_g: Option<f64>,
    pub c_ev: Option<f64>,
    pub status: SolveStatus,
    pub delta_used: usize,
    pub deltas_tried: Vec<usize>,
    pub flip_count: usize,
    pub settled: usize,
    pub leftover: usize,
    pub dc_status: DcStatus,
    pub dc_iterations: usize,
    pub dc_time: f64,
    pub stage2_time: f64,
    pub total_time: f64,
    pub stage2_nodes: usize,
    /// Whether the last sub-problem was solved to proven optimality.
    pub stage2_proved: bool,
    #[serde(skip)]
    pub values: Vec<f64>,
    #[serde(skip)]
    pub warm_start: WarmStart,
}

/// Stage 2 from an existing stage-1 result.
pub fn run_stage_two(
    p: &ConicProgram,
    dc: &DcOutcome,
    tr: &TrustRegionConfig,
    bnb: &BnbConfig,
) -> Result<StageOutcome> {
    let start_time = Instant::now();
    let ws = build_warm_start(&dc.binaries, &dc.y_hat, tr.closeness_tol);
    let n = p.num_vars();
    let mut tried = Vec::new();
    // the indicators follow the original binaries, so branch on those first
    let mut bnb = bnb.clone();
    if bnb.branch_priority.is_empty() {
        bnb.branch_priority = dc.binaries.clone();
    }
    let schedule = tr.schedule(ws.settled())?;
    let mut nodes = 0;

    // The fixed point y_S = y_bar is feasible at every radius; solving it
    // first hands the wider searches an incumbent to prune against.
    let mut seed: Option<Vec<f64>> = None;
    if schedule[0] > 0 && ws.settled() > 0 {
        let (sub, _) = build_subproblem(p, &ws, 0)?;
        let res = solve_misocp(&sub, &bnb)?;
        nodes += res.nodes_explored;
        if !res.solution.values.is_empty() {
            seed = Some(res.solution.values[..n].to_vec());
        }
    }

    for delta in schedule {
        tried.push(delta);
        let (sub, indicators) = build_subproblem(p, &ws, delta)?;
        let start = seed.as_ref().map(|x| {
            let mut x = x.clone();
            let settled = ws.s0.iter().map(|v| x[v.0]).chain(ws.s1.iter().map(|v| 1.0 - x[v.0]));
            let ind: Vec<f64> = settled.map(|d| d.round().max(0.0)).collect();
            debug_assert_eq!(ind.len(), indicators.len());
            x.extend(ind);
            x
        });
        let res = solve_misocp_from(&sub, &bnb, start.as_deref())?;
        nodes += res.nodes_explored;
        let sol: Solution = res.solution;
        if sol.values.is_empty() {
            log::debug!("trust region {delta}: {}", sol.status);
            continue;
        }
        let values = sol.values[..n].to_vec();
        let flips = ws.flip_count(&values);
        if flips > delta {
            return Err(Error::Invariant(format!(
                "sub-problem answer flips {flips} settled binaries with radius {delta}"
            )));
        }
        let stage2_time = start_time.elapsed().as_secs_f64();
        return Ok(StageOutcome {
            objective: p.objective_value(&values),
            c_g: None,
            c_ev: None,
            status: sol.status,
            delta_used: delta,
            deltas_tried: tried,
            flip_count: flips,
            settled: ws.settled(),
            leftover: ws.leftover.len(),
            dc_status: dc.status,
            dc_iterations: dc.trace.total_iterations(),
            dc_time: dc.time,
            stage2_time,
            total_time: dc.time + stage2_time,
            stage2_nodes: nodes,
            stage2_proved: res.proved_optimal,
            values,
            warm_start: ws,
        });
    }
    Err(Error::InfeasibleAtAllDeltas { tried })
}

/// Stage 1 followed by stage 2.
pub fn run_two_stage(
    p: &ConicProgram,
    dc_cfg: &DcConfig,
    tr: &TrustRegionConfig,
    bnb: &BnbConfig,
) -> Result<StageOutcome> {
    let dc = run_dc(p, dc_cfg)?;
    run_stage_two(p, &dc, tr, bnb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnb::enumerate_oracle;
    use crate::conic::SolveOptions;

    #[test]
    fn warm_start_partition() {
        let vars = [VarId(0), VarId(1), VarId(2)];
        let ws = build_warm_start(&vars, &[0.0, 1.0, 0.4], 1e-5);
        assert_eq!(ws.s0, vec![VarId(0)]);
        assert_eq!(ws.s1, vec![VarId(1)]);
        assert_eq!(ws.leftover, vec![VarId(2)]);
        let all = build_warm_start(&vars, &[1e-6, 1.0 - 1e-6, 0.0], 1e-5);
        assert!(all.leftover.is_empty() && all.settled() == 3);
        let none = build_warm_start(&vars, &[0.5; 3], 1e-5);
        assert_eq!(none.settled(), 0);
    }

    /// Three binaries, pick at least two, distinct costs.
    fn pick_two() -> ConicProgram {
        let mut p = ConicProgram::new();
        let y: Vec<VarId> = (0..3).map(|_| p.add_variable(0.0, 1.0, true).unwrap()).collect();
        p.add_ineq(LinearExpr::from_terms(y.iter().map(|&v| (v, -1.0)), 2.0))
            .unwrap();
        p.set_objective(LinearExpr::from_terms([(y[0], 3.0), (y[1], 1.0), (y[2], 2.0)], 0.0))
            .unwrap();
        p
    }

    #[test]
    fn zero_radius_equals_fixing() {
        let p = pick_two();
        let vars = p.binary_vars();
        let ws = build_warm_start(&vars, &[1.0, 1.0, 0.0], 1e-5);
        let (sub, ind) = build_subproblem(&p, &ws, 0).unwrap();
        assert_eq!(sub.num_binaries(), 3 + 3);
        assert_eq!(ind.len(), 3);
        let via_tr = solve_misocp(&sub, &BnbConfig::default()).unwrap();
        let mut fixed = p.clone();
        for (v, y) in vars.iter().zip([1.0, 1.0, 0.0]) {
            fixed.fix(*v, y).unwrap();
        }
        let via_fix = solve_misocp(&fixed, &BnbConfig::default()).unwrap();
        assert!((via_tr.solution.objective_value - via_fix.solution.objective_value).abs() < 1e-7);
        assert!((via_tr.solution.objective_value - 4.0).abs() < 1e-6);
    }

    #[test]
    fn wide_radius_recovers_optimum() {
        let p = pick_two();
        let vars = p.binary_vars();
        let oracle = enumerate_oracle(&p, &SolveOptions::default()).unwrap();
        for delta in 0..=3 {
            let ws = build_warm_start(&vars, &[1.0, 1.0, 0.0], 1e-5);
            let (sub, _) = build_subproblem(&p, &ws, delta).unwrap();
            let r = solve_misocp(&sub, &BnbConfig::default()).unwrap();
            let obj = r.solution.objective_value;
            assert!(obj >= oracle.solution.objective_value - 1e-6);
            if delta >= 2 {
                assert!((obj - oracle.solution.objective_value).abs() < 1e-6);
            }
            assert!(ws.flip_count(&r.solution.values) <= delta);
        }
    }

    #[test]
    fn escalation_schedule() {
        let tr = TrustRegionConfig::with_delta(2);
        assert_eq!(tr.schedule(40).unwrap(), vec![2, 5, 40]);
        assert_eq!(tr.schedule(3).unwrap(), vec![2, 3]);
        let off = TrustRegionConfig {
            escalation: Escalation::Disabled,
            ..tr.clone()
        };
        assert_eq!(off.schedule(40).unwrap(), vec![2]);
        let bad = TrustRegionConfig {
            escalation: Escalation::Fixed(vec![4, 4]),
            ..tr
        };
        assert!(bad.schedule(40).is_err());
    }

    #[test]
    fn escalates_when_fixing_is_infeasible() {
        // the warm start violates "pick two"; one flip repairs it
        let p = pick_two();
        let dc = DcOutcome {
            binaries: p.binary_vars(),
            y_hat: vec![0.0, 1.0, 0.0],
            values: vec![0.0, 1.0, 0.0],
            trace: Default::default(),
            status: DcStatus::Converged,
            lambda: 1.0,
            time: 0.0,
        };
        let tr = TrustRegionConfig::with_delta(0);
        let out = run_stage_two(&p, &dc, &tr, &BnbConfig::default()).unwrap();
        assert_eq!(out.deltas_tried, vec![0, 1]);
        assert_eq!(out.delta_used, 1);
        assert_eq!(out.flip_count, 1);
        assert!((out.objective - 3.0).abs() < 1e-6);

        let strict = TrustRegionConfig {
            escalation: Escalation::Disabled,
            ..tr
        };
        assert!(matches!(
            run_stage_two(&p, &dc, &strict, &BnbConfig::default()),
            Err(Error::InfeasibleAtAllDeltas { .. })
        ));
    }
}
