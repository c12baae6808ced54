//! JSON snapshot of a [`ConicProgram`], used for debugging and oracle replay.
//!
//! Infinite bounds are written as `null`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConicProgram, LinearExpr, VarId};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExprSnapshot {
    pub terms: Vec<(usize, f64)>,
    #[serde(rename = "const")]
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSnapshot {
    pub x: Vec<ExprSnapshot>,
    pub u: ExprSnapshot,
    pub v: ExprSnapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramSnapshot {
    pub num_vars: usize,
    pub bounds: Vec<(Option<f64>, Option<f64>)>,
    pub binary: Vec<usize>,
    pub objective: ExprSnapshot,
    pub eq: Vec<ExprSnapshot>,
    pub ineq: Vec<ExprSnapshot>,
    pub rsoc: Vec<ConeSnapshot>,
}

impl From<&LinearExpr> for ExprSnapshot {
    fn from(e: &LinearExpr) -> Self {
        Self {
            terms: e.terms().iter().map(|&(v, c)| (v.0, c)).collect(),
            constant: e.constant_term(),
        }
    }
}

impl ExprSnapshot {
    fn to_expr(&self) -> LinearExpr {
        let mut e = LinearExpr::constant(self.constant);
        for &(v, c) in &self.terms {
            e.add_term(VarId(v), c);
        }
        e
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl From<&ConicProgram> for ProgramSnapshot {
    fn from(p: &ConicProgram) -> Self {
        Self {
            num_vars: p.num_vars(),
            bounds: p.bounds().map(|(lo, hi)| (finite(lo), finite(hi))).collect(),
            binary: p.binary_vars().into_iter().map(|v| v.0).collect(),
            objective: p.objective().into(),
            eq: p.eq_constraints().iter().map(Into::into).collect(),
            ineq: p.ineq_constraints().iter().map(Into::into).collect(),
            rsoc: p
                .soc_constraints()
                .iter()
                .map(|c| ConeSnapshot {
                    x: c.x.iter().map(Into::into).collect(),
                    u: (&c.u).into(),
                    v: (&c.v).into(),
                })
                .collect(),
        }
    }
}

impl ProgramSnapshot {
    pub fn to_program(&self) -> Result<ConicProgram> {
        if self.bounds.len() != self.num_vars {
            return Err(Error::Invariant(format!(
                "snapshot has {} bounds for {} variables",
                self.bounds.len(),
                self.num_vars
            )));
        }
        let mut p = ConicProgram::new();
        let mut is_bin = vec![false; self.num_vars];
        for &b in &self.binary {
            if b >= self.num_vars {
                return Err(Error::UnknownVar {
                    var: VarId(b),
                    num_vars: self.num_vars,
                });
            }
            is_bin[b] = true;
        }
        for (&(lo, hi), &bin) in self.bounds.iter().zip(&is_bin) {
            p.add_variable(lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY), bin)?;
        }
        p.set_objective(self.objective.to_expr())?;
        for e in &self.eq {
            p.add_eq(e.to_expr())?;
        }
        for e in &self.ineq {
            p.add_ineq(e.to_expr())?;
        }
        for c in &self.rsoc {
            p.add_rotated_soc(
                c.x.iter().map(ExprSnapshot::to_expr).collect(),
                c.u.to_expr(),
                c.v.to_expr(),
            )?;
        }
        Ok(p)
    }
}

impl ConicProgram {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ProgramSnapshot::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<ProgramSnapshot>(s)?.to_program()
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_snapshot(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
