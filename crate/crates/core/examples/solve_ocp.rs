// Solve the transcribed control problem from the feedback warm start.

use mft::{scenario, solve, SolverConfig};

pub fn run_example() -> mft::Result<()> {
    let s = scenario::consensus();
    let sol = solve(&s, &SolverConfig::default())?;
    println!("feedback warm start  J = {:.8}", sol.initial_value);
    println!("optimized            V = {:.8}", sol.value);
    println!(
        "{} after {} iterations, |grad| = {:.2e}",
        sol.termination, sol.iterations, sol.gradient_norm
    );
    for entry in sol.log.iter().step_by((sol.log.len() / 5).max(1)) {
        println!("  it {:4}  J = {:.10}  step = {:.3e}", entry.iteration, entry.objective, entry.step);
    }
    Ok(())
}

fn main() -> mft::Result<()> {
    run_example()
}
