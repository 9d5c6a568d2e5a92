// Load a scenario from TOML text and render reports as JSON and CSV.

use mft::report::{to_json, trajectory_csv, Emit, Format};
use mft::{compute_static_pair, dissipativity_deficit, estimate_constants, invariant_radius, simulate_feedback};

const CONFIG: &str = r#"
[scenario]
dim = 1
particles = 3
a = 0.0
b = 1.0
steps = 4
initial = [[1.0], [2.0], [-0.5]]

[kernel]
kind = "linear"
kappa = 0.5

[cost]
target = [0.0]
gamma = 2.0
"#;

pub fn run_example() -> mft::Result<()> {
    let cfg = mft::load(CONFIG)?;
    let s = &cfg.scenario;
    let pair = compute_static_pair(s)?;
    let consts = estimate_constants(s, &pair, invariant_radius(s, &pair))?;
    print!("{}", to_json(&consts)?);

    let (traj, u) = simulate_feedback(&s.initial_state(), &pair, s)?;
    print!("{}", trajectory_csv(&traj));
    let curve = dissipativity_deficit(&traj, &u, &pair, s)?;
    print!("{}", curve.render(Format::Csv)?);
    Ok(())
}

fn main() -> mft::Result<()> {
    run_example()
}
