// Interior-decay quantities of one solved problem and their bounds.

use mft::turnpike::BoundCheck;
use mft::{analyze, scenario, SolverConfig};

fn show(name: &str, c: &BoundCheck) {
    println!(
        "{name:<14} t_lo = {:6.3}  lhs = {:.4e}  bound = {:.4e}  margin >= 0: {}",
        c.t_lo,
        c.lhs,
        c.bound,
        c.holds()
    );
}

pub fn run_example() -> mft::Result<()> {
    let s = scenario::consensus();
    let (report, _) = analyze(&s, &SolverConfig::default())?;
    println!("gate: {} (min deficit {:.3e})", report.gate, report.min_deficit);
    show("A_*", &report.a_star);
    show("alpha form", &report.odethm1);
    if let Some(b) = &report.b_star {
        show("B_*", b);
    }
    show("measure A_*", &report.measure_a_star);
    show("integral", &report.integral);
    println!("witness t0 = {:?}, t1 = {:?}", report.t0, report.t1);
    Ok(())
}

fn main() -> mft::Result<()> {
    run_example()
}
