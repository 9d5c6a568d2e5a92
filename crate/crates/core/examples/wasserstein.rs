// W1 between empirical measures: sorted matching on the line, assignment in
// higher dimensions, unequal atom counts through replication.

use mft::{wasserstein1, EmpiricalMeasure};

pub fn run_example() -> mft::Result<()> {
    let mu = EmpiricalMeasure::new(1, vec![0.0, 1.0, 3.0])?;
    let nu = EmpiricalMeasure::new(1, vec![0.5, 2.0, 2.5])?;
    println!("1-d:        W1 = {}", wasserstein1(&mu, &nu)?);

    let square = EmpiricalMeasure::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0])?;
    let shifted = square.translated(&[0.3, -0.4]);
    println!("translate:  W1 = {} (= |v| = 0.5)", wasserstein1(&square, &shifted)?);

    let pair = EmpiricalMeasure::new(2, vec![0.5, 0.5, 0.5, 0.5])?;
    println!("4 vs 2:     W1 = {}", wasserstein1(&square, &pair)?);
    Ok(())
}

fn main() -> mft::Result<()> {
    run_example()
}
