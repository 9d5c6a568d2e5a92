// A_*(b) across horizons, with the fitted log-log slope.

use mft::{horizon_sweep, scenario, SolverConfig};

pub fn run_example() -> mft::Result<()> {
    let s = scenario::consensus();
    let sweep = horizon_sweep(&s, &[5.0, 10.0, 20.0], 0.5, 0.5, &SolverConfig::default())?;
    for row in &sweep.rows {
        match &row.report {
            Some(r) => println!(
                "b = {:5.1}  A_* = {:.4e}  bound = {:.4e}  gate = {}",
                row.b, r.a_star.lhs, r.a_star.bound, r.gate
            ),
            None => println!("b = {:5.1}  failed: {}", row.b, row.error.as_deref().unwrap_or("")),
        }
    }
    println!("slope {:?} (bound decays with slope {})", sweep.slope, sweep.theoretical_slope);
    Ok(())
}

fn main() -> mft::Result<()> {
    run_example()
}
