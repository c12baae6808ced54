//! Stage 1: difference-of-convex penalty for the binaries.
//!
//! `y in {0,1}` is equivalent to `y in [0,1]` with `g(y) = y - y^2 = 0`, and
//! `g >= 0` on the box. The concave `g` is majorized at the previous iterate
//! by its tangent, so each step is a continuous SOCP:
//!
//! `min f(x) + lambda * sum_i [(1 - 2 y_prev_i) y_i + y_prev_i^2]`.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conic::{
    fractionality, solve_continuous_retrying, ConicProgram, LinearExpr, SolveOptions, SolveStatus, VarId,
};
use crate::error::{Error, Result};
use crate::v2g::V2gModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YInit {
    /// Every binary starts at 0.5.
    Half,
    /// Start from the plain continuous relaxation.
    RelaxationOptimum,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DcConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub int_tol: f64,
    pub y_init: YInit,
    /// Times `lambda` is doubled when the result stays too fractional.
    pub max_escalations: usize,
    /// Final max fractionality that triggers an escalation.
    pub escalate_above: f64,
    /// `||y_next - y||_inf` below which the iteration is a fixed point.
    pub plateau_tol: f64,
    pub solve: SolveOptions,
}

impl Default for DcConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            max_iters: 50,
            int_tol: 1e-5,
            y_init: YInit::RelaxationOptimum,
            max_escalations: 4,
            escalate_above: 0.1,
            plateau_tol: 1e-9,
            solve: SolveOptions::default(),
        }
    }
}

impl DcConfig {
    /// Defaults with `lambda` scaled to the instance.
    pub fn for_model(model: &V2gModel) -> Self {
        Self {
            lambda: default_lambda(model),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) || self.max_iters == 0 {
            return Err(Error::Invariant(format!(
                "dc config needs lambda >= 0 and max_iters >= 1, got {} / {}",
                self.lambda, self.max_iters
            )));
        }
        Ok(())
    }
}

/// `2 * max|price| * max p_max * dt * #EVs`, with a floor of 1.
pub fn default_lambda(model: &V2gModel) -> f64 {
    let p_max = model.sessions.iter().map(|s| s.p_max).fold(0.0, f64::max);
    let l = 2.0 * model.prices.scale() * p_max * model.case.dt * model.sessions.len() as f64;
    l.max(1.0)
}

/// `g(y) = y - y^2` summed.
pub fn dc_penalty(y: &[f64]) -> f64 {
    y.iter().map(|&v| v - v * v).sum()
}

/// Tangent majorizer of `sum g` at `y_prev`, as an expression in `vars`.
pub fn dc_penalty_expr(vars: &[VarId], y_prev: &[f64]) -> LinearExpr {
    assert_eq!(vars.len(), y_prev.len());
    let mut e = LinearExpr::new();
    for (&v, &yp) in vars.iter().zip(y_prev) {
        e.add_term(v, 1.0 - 2.0 * yp);
        e.add_constant(yp * yp);
    }
    e
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DcIterate {
    pub iter: usize,
    pub y: Vec<f64>,
    /// Original objective at the iterate.
    pub obj: f64,
    /// `obj + lambda * sum g(y)`.
    pub penalized_obj: f64,
    pub max_frac: f64,
    pub time: f64,
}

/// All iterates of one pass at a fixed `lambda`. `iterates[0]` is the start
/// point when it came from a solve (`iter` = 0).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DcRun {
    pub lambda: f64,
    pub iterates: Vec<DcIterate>,
}

impl DcRun {
    /// Largest increase of the penalized objective between consecutive
    /// iterates (zero or negative when it descends).
    pub fn max_ascent(&self) -> f64 {
        self.iterates
            .windows(2)
            .map(|w| w[1].penalized_obj - w[0].penalized_obj)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether every step descends up to `tol` relative to the objective size.
    pub fn is_descending(&self, tol: f64) -> bool {
        self.iterates
            .windows(2)
            .all(|w| w[1].penalized_obj <= w[0].penalized_obj + tol * w[0].penalized_obj.abs().max(1.0))
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DcTrace {
    /// One run per `lambda` tried, in order.
    pub runs: Vec<DcRun>,
}

impl DcTrace {
    pub fn last(&self) -> Option<&DcRun> {
        self.runs.last()
    }

    /// Solver iterations across all runs, start points excluded.
    pub fn total_iterations(&self) -> usize {
        self.runs
            .iter()
            .map(|r| r.iterates.iter().filter(|i| i.iter > 0).count())
            .sum()
    }

    /// CSV `iter,obj,penalized_obj,max_frac,time` for the final run.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "obj", "penalized_obj", "max_frac", "time"])?;
        for it in self.last().map(|r| r.iterates.as_slice()).unwrap_or(&[]) {
            w.write_record([
                it.iter.to_string(),
                it.obj.to_string(),
                it.penalized_obj.to_string(),
                it.max_frac.to_string(),
                it.time.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcStatus {
    /// All binaries within `int_tol`.
    Converged,
    Plateau,
    IterationLimit,
    /// A subproblem failed; the last good iterate is returned.
    Aborted(SolveStatus),
}

#[derive(Clone, Debug)]
pub struct DcOutcome {
    /// Binaries in ascending id order, matching `y_hat`.
    pub binaries: Vec<VarId>,
    pub y_hat: Vec<f64>,
    /// Full variable vector of the last iterate.
    pub values: Vec<f64>,
    pub trace: DcTrace,
    pub status: DcStatus,
    pub lambda: f64,
    pub time: f64,
}

impl DcOutcome {
    pub fn max_frac(&self) -> f64 {
        self.y_hat.iter().map(|&y| fractionality(y)).fold(0.0, f64::max)
    }

    pub fn integral_share(&self, tol: f64) -> f64 {
        if self.y_hat.is_empty() {
            return 1.0;
        }
        let n = self.y_hat.iter().filter(|&&y| fractionality(y) < tol).count();
        n as f64 / self.y_hat.len() as f64
    }
}

fn max_frac(y: &[f64]) -> f64 {
    y.iter().map(|&v| fractionality(v)).fold(0.0, f64::max)
}

fn gather(values: &[f64], vars: &[VarId]) -> Vec<f64> {
    vars.iter().map(|v| values[v.0].clamp(0.0, 1.0)).collect()
}

struct RunEnd {
    run: DcRun,
    values: Option<Vec<f64>>,
    y: Vec<f64>,
    status: DcStatus,
}

/// Penalized path-following over the relaxation of `p`. The last iterate may
/// still be fractional; that is reported, not treated as an error.
pub fn run_dc(p: &ConicProgram, cfg: &DcConfig) -> Result<DcOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let base = p.continuous_relaxation();
    let binaries = p.binary_vars();
    let f = p.objective();

    let (y0, x0, t0) = match cfg.y_init {
        YInit::Half => (vec![0.5; binaries.len()], None, 0.0),
        YInit::RelaxationOptimum => {
            let s = solve_continuous_retrying(&base, &cfg.solve)?;
            if !s.is_optimal() {
                return Err(Error::BackendFailure(format!(
                    "continuous relaxation ended {}",
                    s.status
                )));
            }
            (gather(&s.values, &binaries), Some(s.values), s.solve_time)
        }
    };

    let one_run = |lambda: f64| -> Result<RunEnd> {
        let mut run = DcRun {
            lambda,
            iterates: Vec::new(),
        };
        if let Some(x) = &x0 {
            run.iterates.push(DcIterate {
                iter: 0,
                y: y0.clone(),
                obj: f.eval(x),
                penalized_obj: f.eval(x) + lambda * dc_penalty(&y0),
                max_frac: max_frac(&y0),
                time: t0,
            });
        }
        let mut y = y0.clone();
        let mut values = x0.clone();
        for k in 1..=cfg.max_iters {
            let mut sub = base.clone();
            let mut obj = f.clone();
            obj.add_scaled(&dc_penalty_expr(&binaries, &y), lambda);
            sub.set_objective(obj)?;
            let s = solve_continuous_retrying(&sub, &cfg.solve)?;
            if !s.is_optimal() {
                log::warn!("dc iteration {k} ended {}", s.status);
                return Ok(RunEnd {
                    run,
                    values,
                    y,
                    status: DcStatus::Aborted(s.status),
                });
            }
            let y_next = gather(&s.values, &binaries);
            let true_obj = f.eval(&s.values);
            let mf = max_frac(&y_next);
            run.iterates.push(DcIterate {
                iter: k,
                y: y_next.clone(),
                obj: true_obj,
                penalized_obj: true_obj + lambda * dc_penalty(&y_next),
                max_frac: mf,
                time: s.solve_time,
            });
            let step = y.iter().zip(&y_next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            y = y_next;
            values = Some(s.values);
            if mf < cfg.int_tol {
                return Ok(RunEnd {
                    run,
                    values,
                    y,
                    status: DcStatus::Converged,
                });
            }
            if step < cfg.plateau_tol {
                return Ok(RunEnd {
                    run,
                    values,
                    y,
                    status: DcStatus::Plateau,
                });
            }
        }
        Ok(RunEnd {
            run,
            values,
            y,
            status: DcStatus::IterationLimit,
        })
    };

    let mut trace = DcTrace::default();
    let mut lambda = cfg.lambda;
    let mut escalations = 0;
    loop {
        let end = one_run(lambda)?;
        trace.runs.push(end.run);
        let done = matches!(end.status, DcStatus::Aborted(_))
            || max_frac(&end.y) <= cfg.escalate_above
            || escalations >= cfg.max_escalations
            || lambda == 0.0;
        if done {
            let values = end
                .values
                .ok_or_else(|| Error::BackendFailure("dc stage produced no iterate".into()))?;
            return Ok(DcOutcome {
                binaries,
                y_hat: end.y,
                values,
                trace,
                status: end.status,
                lambda,
                time: start.elapsed().as_secs_f64(),
            });
        }
        escalations += 1;
        lambda *= 2.0;
        log::debug!("dc result too fractional, retrying with lambda = {lambda}");
    }
}
