// Uncontrolled bounded-influence dynamics: the cloud contracts towards its
// mean while the mean itself stays put.

use mft::{integrate, scenario, ControlGrid};

pub fn run_example() -> mft::Result<()> {
    let s = scenario::consensus();
    let traj = integrate(&s.initial_state(), &ControlGrid::zeros(&s), &s)?;
    let spread = |m: usize| {
        let x = traj.state(m);
        let n = s.particles as f64;
        let mean: Vec<f64> = (0..s.dim)
            .map(|j| x.iter().skip(j).step_by(s.dim).sum::<f64>() / n)
            .collect();
        let var = x
            .chunks(s.dim)
            .map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    };
    for m in [0, s.steps / 4, s.steps / 2, s.steps] {
        let (mean, sd) = spread(m);
        println!("t = {:5.2}  mean = ({:.4}, {:.4})  spread = {:.3e}", traj.times[m], mean[0], mean[1], sd);
    }
    Ok(())
}

fn main() -> mft::Result<()> {
    run_example()
}
