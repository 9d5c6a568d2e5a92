// Empirical measures of nested particle systems approach the largest one.

use mft::{convergence_study, scenario, Policy, SolverConfig};

pub fn run_example() -> mft::Result<()> {
    let mut s = scenario::consensus();
    s.b = 4.0;
    s.steps = 80;
    let s = s.validated()?;
    let report = convergence_study(&s, &[4, 8, 16, 32], Policy::Feedback, &[0, 1, 2], &SolverConfig::default())?;
    println!("reference N = {}", report.reference_n);
    for row in &report.summary {
        println!(
            "N = {:3}  median sup W1 = {:.4e}  median |J_N - J_ref| = {:.4e}",
            row.n, row.median_sup_w1, row.median_objective_gap
        );
    }
    Ok(())
}

fn main() -> mft::Result<()> {
    run_example()
}
