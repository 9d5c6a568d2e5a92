// The stabilizing feedback cancels the interaction and pulls every particle
// to the static state at rate beta; the closed-loop cost is certified by C0.

use mft::{compute_static_pair, estimate_constants, invariant_radius, objective, scenario, simulate_feedback};

pub fn run_example() -> mft::Result<()> {
    let s = scenario::consensus();
    let pair = compute_static_pair(&s)?;
    let radius = invariant_radius(&s, &pair);
    let (traj, u) = simulate_feedback(&s.initial_state(), &pair, &s)?;

    let mut worst: f64 = 0.0;
    for m in 0..=s.steps {
        let decay = (-s.beta * (traj.times[m] - s.a)).exp();
        for k in 0..s.particles {
            let d0 = dist(&s.initial_states[k * s.dim..(k + 1) * s.dim], &pair.psi_sigma);
            let d = dist(&traj.state(m)[k * s.dim..(k + 1) * s.dim], &pair.psi_sigma);
            worst = worst.max((d - decay * d0).abs());
        }
    }
    println!("invariant radius R = {radius:.4}");
    println!("max deviation from exp(-beta t) law: {worst:.3e}");

    let consts = estimate_constants(&s, &pair, radius)?;
    let value = objective(&traj, &u, &s)?.total;
    let mean_dist = (0..s.particles)
        .map(|k| dist(&s.initial_states[k * s.dim..(k + 1) * s.dim], &pair.psi_sigma))
        .sum::<f64>()
        / s.particles as f64;
    println!("closed-loop cost {value:.4} <= C0 * mean distance = {:.4}", consts.C0 * mean_dist);
    Ok(())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn main() -> mft::Result<()> {
    run_example()
}
