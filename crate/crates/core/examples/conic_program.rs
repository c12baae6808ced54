//! Builds a small second-order cone program by hand, solves it, and round-trips
//! it through the JSON snapshot format.
//!
//!     cargo run --example conic_program

use v2g_core::conic::{solve_continuous, ConicProgram, LinearExpr, SolveOptions};

fn main() -> v2g_core::Result<()> {
    // min t  s.t.  (x - 3)^2 + (y - 4)^2 <= t * 1,  x + y <= 5
    let mut p = ConicProgram::new();
    let x = p.add_variable(f64::NEG_INFINITY, f64::INFINITY, false)?;
    let y = p.add_variable(f64::NEG_INFINITY, f64::INFINITY, false)?;
    let t = p.add_variable(0.0, f64::INFINITY, false)?;
    p.set_objective(LinearExpr::var(t))?;
    p.add_rotated_soc(
        vec![
            LinearExpr::term(x, 1.0).with_constant(-3.0),
            LinearExpr::term(y, 1.0).with_constant(-4.0),
        ],
        LinearExpr::var(t),
        LinearExpr::constant(1.0),
    )?;
    p.add_ineq(LinearExpr::from_terms([(x, 1.0), (y, 1.0)], -5.0))?;

    let s = solve_continuous(&p, &SolveOptions::default())?;
    println!("status {}  objective {:.6}", s.status, s.objective_value);
    println!(
        "x = {:.4}, y = {:.4}  (closed form: 2, 3)",
        s.values[x.0], s.values[y.0]
    );
    println!("max residual {:.2e}", p.max_violation(&s.values));

    let json = p.to_json()?;
    let back = ConicProgram::from_json(&json)?;
    let s2 = solve_continuous(&back, &SolveOptions::default())?;
    println!(
        "snapshot: {} bytes, re-solved objective {:.6}",
        json.len(),
        s2.objective_value
    );
    Ok(())
}
