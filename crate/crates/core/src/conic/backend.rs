use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{ConicProgram, LinearExpr, Solution, SolveOptions, SolveStatus};
use crate::error::{Error, Result};

/// A continuous SOCP solver.
///
/// Implementations must return `Optimal` only with a primal point whose
/// independently recomputed violation is at most `opts.feas_tol`, and must
/// keep all solver state local to the call.
pub trait ConicBackend: Send + Sync {
    fn solve(&self, p: &ConicProgram, opts: &SolveOptions) -> Result<Solution>;
}

/// Solves `p` with the default backend. `p` must carry no binary flags.
pub fn solve_continuous(p: &ConicProgram, opts: &SolveOptions) -> Result<Solution> {
    solve_continuous_with(&ClarabelBackend, p, opts)
}

/// [`solve_continuous`], retried once with [`SolveOptions::tightened`] when
/// the first attempt fails numerically or runs out of iterations.
pub fn solve_continuous_retrying(p: &ConicProgram, opts: &SolveOptions) -> Result<Solution> {
    let s = solve_continuous(p, opts)?;
    if matches!(s.status, SolveStatus::NumericalFailure | SolveStatus::IterationLimit) {
        log::debug!("retrying continuous solve after {}", s.status);
        let mut r = solve_continuous(p, &opts.tightened())?;
        r.solve_time += s.solve_time;
        return Ok(r);
    }
    Ok(s)
}

pub fn solve_continuous_with(backend: &dyn ConicBackend, p: &ConicProgram, opts: &SolveOptions) -> Result<Solution> {
    let nb = p.num_binaries();
    if nb > 0 {
        return Err(Error::BinaryPresent(nb));
    }
    backend.solve(p, opts)
}

/// Adapter to the Clarabel interior-point solver.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClarabelBackend;

impl ConicBackend for ClarabelBackend {
    fn solve(&self, p: &ConicProgram, opts: &SolveOptions) -> Result<Solution> {
        let start = Instant::now();
        let data = StandardForm::from_program(p);

        let mut settings = DefaultSettingsBuilder::default();
        settings
            .verbose(false)
            .max_iter(opts.max_iter)
            .tol_feas(opts.feas_tol * 1e-2)
            .tol_gap_abs(opts.gap_tol)
            .tol_gap_rel(opts.gap_tol)
            .max_threads(1);
        if let Some(t) = opts.time_limit {
            settings.time_limit(t.max(1e-3));
        }
        let settings = settings
            .build()
            .map_err(|e| Error::BackendFailure(format!("settings: {e:?}")))?;

        let n = p.num_vars();
        let q: Vec<f64> = {
            let mut q = vec![0.0; n];
            for &(v, c) in p.objective().terms() {
                q[v.0] += c;
            }
            q
        };
        let quad = CscMatrix::zeros((n, n));
        let a = data.matrix(n);
        let mut solver = DefaultSolver::new(&quad, &q, &a, &data.rhs, &data.cones, settings)
            .map_err(|e| Error::BackendFailure(format!("{e:?}")))?;
        solver.solve();

        let elapsed = start.elapsed().as_secs_f64();
        let status = match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            SolverStatus::MaxIterations => SolveStatus::IterationLimit,
            SolverStatus::MaxTime => SolveStatus::TimeLimit,
            _ => SolveStatus::NumericalFailure,
        };
        if status != SolveStatus::Optimal {
            return Ok(Solution::failed(status, elapsed));
        }

        // interior points sit strictly inside simple bounds up to round-off
        let values: Vec<f64> = solver
            .solution
            .x
            .iter()
            .zip(p.bounds())
            .map(|(&x, (lo, hi))| x.clamp(lo, hi))
            .collect();
        let violation = p.max_violation(&values);
        if !(violation <= opts.feas_tol) {
            log::debug!("clarabel answer violates constraints by {violation:.3e}");
            return Ok(Solution::failed(SolveStatus::NumericalFailure, elapsed));
        }
        let z = &solver.solution.z;
        let bound_duals = data
            .bound_rows
            .iter()
            .map(|&(lo, hi)| (lo.map_or(0.0, |r| z[r].max(0.0)), hi.map_or(0.0, |r| z[r].max(0.0))))
            .collect();
        Ok(Solution {
            objective_value: p.objective_value(&values),
            values,
            status,
            solve_time: elapsed,
            bound_duals,
            dual_objective: solver.solution.obj_val_dual + p.objective().constant_term(),
        })
    }
}

/// `A x + s = b, s in K` with K = zero x nonnegative x SOC...
struct StandardForm {
    /// Sparse rows: (column, value).
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    /// Rows holding each variable's lower and upper bound, if any.
    bound_rows: Vec<(Option<usize>, Option<usize>)>,
}

impl StandardForm {
    fn from_program(p: &ConicProgram) -> Self {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();

        // s = -e for e = 0 / e <= 0
        fn push_neg(e: &LinearExpr, rows: &mut Vec<Vec<(usize, f64)>>, rhs: &mut Vec<f64>) {
            rows.push(e.terms().iter().map(|&(v, c)| (v.0, c)).collect());
            rhs.push(-e.constant_term());
        }
        // s = e
        fn push_pos(e: &LinearExpr, rows: &mut Vec<Vec<(usize, f64)>>, rhs: &mut Vec<f64>) {
            rows.push(e.terms().iter().map(|&(v, c)| (v.0, -c)).collect());
            rhs.push(e.constant_term());
        }

        let mut n_zero = 0;
        for e in p.eq_constraints() {
            push_neg(e, &mut rows, &mut rhs);
            n_zero += 1;
        }
        for (i, (lo, hi)) in p.bounds().enumerate() {
            if lo == hi {
                rows.push(vec![(i, 1.0)]);
                rhs.push(lo);
                n_zero += 1;
            }
        }
        let mut n_nonneg = 0;
        for e in p.ineq_constraints() {
            push_neg(e, &mut rows, &mut rhs);
            n_nonneg += 1;
        }
        let mut bound_rows = vec![(None, None); p.num_vars()];
        for (i, (lo, hi)) in p.bounds().enumerate() {
            if lo == hi {
                continue;
            }
            if lo.is_finite() {
                bound_rows[i].0 = Some(rows.len());
                rows.push(vec![(i, -1.0)]);
                rhs.push(-lo);
                n_nonneg += 1;
            }
            if hi.is_finite() {
                bound_rows[i].1 = Some(rows.len());
                rows.push(vec![(i, 1.0)]);
                rhs.push(hi);
                n_nonneg += 1;
            }
        }

        let mut cones = Vec::new();
        if n_zero > 0 {
            cones.push(SupportedConeT::ZeroConeT(n_zero));
        }
        if n_nonneg > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(n_nonneg));
        }

        // ||x||^2 <= u v  <=>  (u + v, u - v, 2x) in SOC
        for cone in p.soc_constraints() {
            let mut sum = cone.u.clone();
            sum.add_scaled(&cone.v, 1.0);
            let mut diff = cone.u.clone();
            diff.add_scaled(&cone.v, -1.0);
            push_pos(&sum, &mut rows, &mut rhs);
            push_pos(&diff, &mut rows, &mut rhs);
            for x in &cone.x {
                push_pos(&x.clone().scaled(2.0), &mut rows, &mut rhs);
            }
            cones.push(SupportedConeT::SecondOrderConeT(cone.x.len() + 2));
        }

        Self {
            rows,
            rhs,
            cones,
            bound_rows,
        }
    }

    fn matrix(&self, n: usize) -> CscMatrix<f64> {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                if v != 0.0 {
                    cols[c].push((r, v));
                }
            }
        }
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for col in cols {
            for (r, v) in col {
                rowval.push(r);
                nzval.push(v);
            }
            colptr.push(rowval.len());
        }
        CscMatrix::new(self.rows.len(), n, colptr, rowval, nzval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::VarId;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn bound_multipliers_are_reduced_costs() {
        // min 2y - x + 3, y in [0, 1], x in [0, 0.5]: y rests at its lower
        // bound with multiplier 2, x at its upper bound with multiplier 1
        let mut p = ConicProgram::new();
        let y = p.add_variable(0.0, 1.0, false).unwrap();
        let x = p.add_variable(0.0, 0.5, false).unwrap();
        p.set_objective(LinearExpr::from_terms([(y, 2.0), (x, -1.0)], 3.0))
            .unwrap();
        let s = solve_continuous(&p, &opts()).unwrap();
        assert!(s.is_optimal());
        assert!((s.dual_objective - 2.5).abs() < 1e-6);
        assert!((s.bound_duals[y.0].0 - 2.0).abs() < 1e-6 && s.bound_duals[y.0].1.abs() < 1e-6);
        assert!(s.bound_duals[x.0].0.abs() < 1e-6 && (s.bound_duals[x.0].1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn min_x_above_three() {
        let mut p = ConicProgram::new();
        let x = p.add_variable(3.0, f64::INFINITY, false).unwrap();
        p.set_objective(LinearExpr::var(x)).unwrap();
        let s = solve_continuous(&p, &opts()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.values[0] - 3.0).abs() < 1e-7);
        assert!((s.objective_value - 3.0).abs() < 1e-7);
    }

    #[test]
    fn rotated_cone_lower_bounds_u() {
        // min u s.t. ||(1,1)||^2 <= u * 1
        let mut p = ConicProgram::new();
        let u = p.add_variable(f64::NEG_INFINITY, f64::INFINITY, false).unwrap();
        p.set_objective(LinearExpr::var(u)).unwrap();
        p.add_rotated_soc(
            vec![LinearExpr::constant(1.0), LinearExpr::constant(1.0)],
            LinearExpr::var(u),
            LinearExpr::constant(1.0),
        )
        .unwrap();
        let s = solve_continuous(&p, &opts()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.values[0] - 2.0).abs() < 1e-6, "{}", s.values[0]);
    }

    #[test]
    fn binaries_must_be_relaxed_first() {
        let mut p = ConicProgram::new();
        p.add_variable(0.0, 1.0, true).unwrap();
        assert!(matches!(solve_continuous(&p, &opts()), Err(Error::BinaryPresent(1))));
    }

    #[test]
    fn infeasible_and_unbounded_detected() {
        let mut p = ConicProgram::new();
        let x = p.add_variable(0.0, 1.0, false).unwrap();
        p.add_ineq(LinearExpr::constant(2.0).with_term(x, -1.0)).unwrap();
        p.set_objective(LinearExpr::var(x)).unwrap();
        assert_eq!(solve_continuous(&p, &opts()).unwrap().status, SolveStatus::Infeasible);

        let mut q = ConicProgram::new();
        let y = q.add_variable(f64::NEG_INFINITY, 0.0, false).unwrap();
        q.set_objective(LinearExpr::var(y)).unwrap();
        assert_eq!(solve_continuous(&q, &opts()).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn fixed_variables_are_exact() {
        let mut p = ConicProgram::new();
        let x = p.add_variable(0.0, 1.0, false).unwrap();
        let y = p.add_variable(0.0, 4.0, false).unwrap();
        p.fix(x, 1.0).unwrap();
        p.add_eq(LinearExpr::var(y).with_term(x, -2.0)).unwrap();
        p.set_objective(LinearExpr::var(y)).unwrap();
        let s = solve_continuous(&p, &opts()).unwrap();
        assert_eq!(s.values[VarId(0).index()], 1.0);
        assert!((s.values[1] - 2.0).abs() < 1e-8);
    }
}
