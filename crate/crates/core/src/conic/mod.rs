//! Intermediate representation for continuous second-order cone programs with
//! binary-flagged variables, and the contract continuous backends satisfy.
//!
//! Every solver in this crate talks to a [`ConicProgram`]: the branch-and-bound
//! baseline, the DC path-following stage and the trust-region repair all build
//! or modify one and hand it to [`solve_continuous`].

mod backend;
mod snapshot;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use backend::{solve_continuous, solve_continuous_retrying, solve_continuous_with, ClarabelBackend, ConicBackend};
pub use snapshot::ProgramSnapshot;

/// Dense ordinal identifier of one decision variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// Affine expression `sum(coef * var) + constant` without duplicate variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearExpr {
    terms: Vec<(VarId, f64)>,
    constant: f64,
}

impl LinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: VarId) -> Self {
        Self::term(v, 1.0)
    }

    pub fn term(v: VarId, coef: f64) -> Self {
        Self {
            terms: vec![(v, coef)],
            constant: 0.0,
        }
    }

    /// Builds an expression from possibly repeated terms, summing duplicates.
    pub fn from_terms(terms: impl IntoIterator<Item = (VarId, f64)>, constant: f64) -> Self {
        let mut raw: Vec<(VarId, f64)> = terms.into_iter().collect();
        raw.sort_by_key(|(v, _)| *v);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(raw.len());
        for (v, c) in raw {
            match merged.last_mut() {
                Some((last, acc)) if *last == v => *acc += c,
                _ => merged.push((v, c)),
            }
        }
        Self {
            terms: merged,
            constant,
        }
    }

    pub fn terms(&self) -> &[(VarId, f64)] {
        &self.terms
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, v: VarId) -> f64 {
        self.terms.iter().find(|(w, _)| *w == v).map_or(0.0, |(_, c)| *c)
    }

    pub fn add_term(&mut self, v: VarId, coef: f64) {
        if let Some((_, c)) = self.terms.iter_mut().find(|(w, _)| *w == v) {
            *c += coef;
        } else {
            self.terms.push((v, coef));
        }
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &LinearExpr, scale: f64) {
        for &(v, c) in &other.terms {
            self.add_term(v, scale * c);
        }
        self.constant += scale * other.constant;
    }

    pub fn with_term(mut self, v: VarId, coef: f64) -> Self {
        self.add_term(v, coef);
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for (_, c) in &mut self.terms {
            *c *= s;
        }
        self.constant *= s;
        self
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(v, c)| acc + c * values[v.0])
    }

    fn check(&self, num_vars: usize, what: &'static str) -> Result<()> {
        if !self.constant.is_finite() {
            return Err(Error::NonFinite(what));
        }
        for &(v, c) in &self.terms {
            if v.0 >= num_vars {
                return Err(Error::UnknownVar { var: v, num_vars });
            }
            if !c.is_finite() {
                return Err(Error::NonFinite(what));
            }
        }
        Ok(())
    }
}

/// Rotated cone `||x||^2 <= u * v` with `u >= 0`, `v >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct RotatedCone {
    pub x: Vec<LinearExpr>,
    pub u: LinearExpr,
    pub v: LinearExpr,
}

impl RotatedCone {
    /// Positive part of the cone violation at `values`.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let u = self.u.eval(values);
        let v = self.v.eval(values);
        let sq: f64 = self.x.iter().map(|e| e.eval(values).powi(2)).sum();
        (sq - u * v).max(-u).max(-v).max(0.0)
    }
}

/// Continuous SOCP plus a set of variables flagged binary. Minimization.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicProgram {
    lower: Vec<f64>,
    upper: Vec<f64>,
    binary: Vec<bool>,
    objective: LinearExpr,
    eq: Vec<LinearExpr>,
    ineq: Vec<LinearExpr>,
    rsoc: Vec<RotatedCone>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn add_variable(&mut self, lo: f64, hi: f64, is_binary: bool) -> Result<VarId> {
        check_bounds(lo, hi, is_binary)?;
        let id = VarId(self.lower.len());
        self.lower.push(lo);
        self.upper.push(hi);
        self.binary.push(is_binary);
        Ok(id)
    }

    pub fn lower(&self, v: VarId) -> f64 {
        self.lower[v.0]
    }

    pub fn upper(&self, v: VarId) -> f64 {
        self.upper[v.0]
    }

    pub fn bounds(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lower.iter().copied().zip(self.upper.iter().copied())
    }

    pub fn set_bounds(&mut self, v: VarId, lo: f64, hi: f64) -> Result<()> {
        self.check_var(v)?;
        check_bounds(lo, hi, self.binary[v.0])?;
        self.lower[v.0] = lo;
        self.upper[v.0] = hi;
        Ok(())
    }

    /// Pins `v` to `value` by collapsing its bounds.
    pub fn fix(&mut self, v: VarId, value: f64) -> Result<()> {
        self.set_bounds(v, value, value)
    }

    pub fn is_binary(&self, v: VarId) -> bool {
        self.binary[v.0]
    }

    /// Binary variables in ascending id order.
    pub fn binary_vars(&self) -> Vec<VarId> {
        self.binary
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(VarId(i)))
            .collect()
    }

    pub fn num_binaries(&self) -> usize {
        self.binary.iter().filter(|&&b| b).count()
    }

    pub fn objective(&self) -> &LinearExpr {
        &self.objective
    }

    pub fn set_objective(&mut self, objective: LinearExpr) -> Result<()> {
        objective.check(self.num_vars(), "objective")?;
        self.objective = objective;
        Ok(())
    }

    /// Adds `expr = 0`.
    pub fn add_eq(&mut self, expr: LinearExpr) -> Result<usize> {
        expr.check(self.num_vars(), "equality")?;
        self.eq.push(expr);
        Ok(self.eq.len() - 1)
    }

    /// Adds `expr <= 0`.
    pub fn add_ineq(&mut self, expr: LinearExpr) -> Result<usize> {
        expr.check(self.num_vars(), "inequality")?;
        self.ineq.push(expr);
        Ok(self.ineq.len() - 1)
    }

    /// Adds `||x||^2 <= u * v`; the backend also enforces `u, v >= 0`.
    pub fn add_rotated_soc(&mut self, x: Vec<LinearExpr>, u: LinearExpr, v: LinearExpr) -> Result<usize> {
        if x.is_empty() {
            return Err(Error::EmptyCone);
        }
        let n = self.num_vars();
        for e in &x {
            e.check(n, "cone")?;
        }
        u.check(n, "cone")?;
        v.check(n, "cone")?;
        self.rsoc.push(RotatedCone { x, u, v });
        Ok(self.rsoc.len() - 1)
    }

    pub fn eq_constraints(&self) -> &[LinearExpr] {
        &self.eq
    }

    pub fn ineq_constraints(&self) -> &[LinearExpr] {
        &self.ineq
    }

    pub fn soc_constraints(&self) -> &[RotatedCone] {
        &self.rsoc
    }

    /// Same program with every binary flag dropped; bounds stay as they are
    /// (so former binaries live in `[0, 1]`).
    pub fn continuous_relaxation(&self) -> ConicProgram {
        let mut p = self.clone();
        p.binary.iter_mut().for_each(|b| *b = false);
        p
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.eval(values)
    }

    /// Recomputes every residual from `values`, independent of any backend.
    pub fn residuals(&self, values: &[f64]) -> Residuals {
        let bounds = self
            .lower
            .iter()
            .zip(&self.upper)
            .zip(values)
            .map(|((&lo, &hi), &x)| (lo - x).max(x - hi).max(0.0))
            .fold(0.0, f64::max);
        let eq = self.eq.iter().map(|e| e.eval(values).abs()).fold(0.0, f64::max);
        let ineq = self.ineq.iter().map(|e| e.eval(values).max(0.0)).fold(0.0, f64::max);
        let cone = self.rsoc.iter().map(|c| c.violation(values)).fold(0.0, f64::max);
        Residuals { bounds, eq, ineq, cone }
    }

    pub fn max_violation(&self, values: &[f64]) -> f64 {
        if values.len() != self.num_vars() {
            return f64::INFINITY;
        }
        self.residuals(values).max()
    }

    /// Largest distance of a binary variable from its nearest integer.
    pub fn max_fractionality(&self, values: &[f64]) -> f64 {
        self.binary_vars()
            .iter()
            .map(|v| fractionality(values[v.0]))
            .fold(0.0, f64::max)
    }

    fn check_var(&self, v: VarId) -> Result<()> {
        if v.0 >= self.num_vars() {
            return Err(Error::UnknownVar {
                var: v,
                num_vars: self.num_vars(),
            });
        }
        Ok(())
    }
}

fn check_bounds(lo: f64, hi: f64, is_binary: bool) -> Result<()> {
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::BoundOrder { lo, hi });
    }
    if is_binary && (lo < 0.0 || hi > 1.0) {
        return Err(Error::BinaryBounds { lo, hi });
    }
    Ok(())
}

/// Distance to the nearest integer.
pub fn fractionality(y: f64) -> f64 {
    (y - y.round()).abs()
}

/// Per-family maximum constraint violation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub bounds: f64,
    pub eq: f64,
    pub ineq: f64,
    pub cone: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.bounds.max(self.eq).max(self.ineq).max(self.cone)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
    NumericalFailure,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::IterationLimit => "iteration_limit",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    /// Primal point; empty when the backend produced none.
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub status: SolveStatus,
    /// Wall-clock seconds.
    pub solve_time: f64,
    /// Multipliers of each variable's `(lower, upper)` bound, when the
    /// backend reports them; zero for fixed or unbounded sides.
    pub bound_duals: Vec<(f64, f64)>,
    /// Dual objective value: a lower bound on the optimum up to the solve
    /// tolerance. NaN when unavailable.
    pub dual_objective: f64,
}

impl Solution {
    pub fn failed(status: SolveStatus, solve_time: f64) -> Self {
        Self {
            values: Vec::new(),
            objective_value: f64::NAN,
            status,
            solve_time,
            bound_duals: Vec::new(),
            dual_objective: f64::NAN,
        }
    }

    /// Primal point without dual information.
    pub fn primal(values: Vec<f64>, objective_value: f64, solve_time: f64) -> Self {
        Self {
            values,
            objective_value,
            status: SolveStatus::Optimal,
            solve_time,
            bound_duals: Vec::new(),
            dual_objective: f64::NAN,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Tolerances and limits handed to a continuous backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Absolute constraint violation accepted on an `Optimal` answer.
    pub feas_tol: f64,
    /// Relative duality gap.
    pub gap_tol: f64,
    pub max_iter: u32,
    /// Seconds; `None` means unlimited.
    pub time_limit: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            gap_tol: 1e-8,
            max_iter: 200,
            time_limit: None,
        }
    }
}

impl SolveOptions {
    /// Ten times tighter tolerances, used to retry after a numerical failure.
    pub fn tightened(&self) -> Self {
        Self {
            feas_tol: self.feas_tol,
            gap_tol: self.gap_tol * 0.1,
            max_iter: self.max_iter * 2,
            time_limit: self.time_limit,
        }
    }
}
