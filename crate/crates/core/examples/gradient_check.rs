// Discrete-adjoint gradient against central finite differences.

use mft::ocp::finite_difference_gradient;
use mft::{gradient, scenario, ControlGrid};

pub fn run_example() -> mft::Result<()> {
    let mut s = scenario::consensus();
    s.particles = 4;
    s.b = 2.0;
    s.steps = 20;
    let s = s.validated()?;
    let values: Vec<f64> = (0..s.steps * s.particles * s.dim)
        .map(|i| 0.3 * (i as f64 * 0.7).sin())
        .collect();
    let u = ControlGrid::from_values(&s, values)?;
    let g = gradient(&u, &s)?;
    let fd = finite_difference_gradient(&u, &s, 1e-5)?;
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    println!("{} control values, max |g - fd| / max |fd| = {:.3e}", g.len(), err / scale);
    Ok(())
}

fn main() -> mft::Result<()> {
    run_example()
}
