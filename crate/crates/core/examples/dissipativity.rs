// Measured dissipativity deficit of the optimal pair, in both integrand forms.

use mft::{compute_static_pair, dissipativity_deficit, scenario, solve, SolverConfig};

pub fn run_example() -> mft::Result<()> {
    let s = scenario::consensus();
    let pair = compute_static_pair(&s)?;
    let sol = solve(&s, &SolverConfig::default())?;
    let curve = dissipativity_deficit(&sol.trajectory, &sol.controls, &pair, &s)?;
    println!("min deficit (squared sum)    {:.6e}", curve.min_deficit);
    println!("min deficit (sum of squares) {:.6e}", curve.min_deficit_sos);
    println!("gate (>= -{:e}): {}", s.turnpike.gate_tol, curve.min_deficit >= -s.turnpike.gate_tol);
    for m in (0..curve.tau.len()).step_by(curve.tau.len() / 5) {
        println!(
            "  tau = {:5.2}  lhs = {:.5}  rhs = {:.5}  deficit = {:.5}",
            curve.tau[m], curve.lhs[m], curve.rhs[m], curve.deficit[m]
        );
    }
    Ok(())
}

fn main() -> mft::Result<()> {
    run_example()
}
