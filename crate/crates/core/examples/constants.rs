// Static pair and effective constants, closed form against the sampled supremum.

use mft::scenario::{sampled_kernel_growth, sampled_state_growth};
use mft::{compute_static_pair, estimate_constants, invariant_radius, scenario};

pub fn run_example() -> mft::Result<()> {
    let s = scenario::consensus();
    let pair = compute_static_pair(&s)?;
    let r = invariant_radius(&s, &pair);
    let c = estimate_constants(&s, &pair, r)?;
    println!("psi_sigma = {:?}, u_sigma = {:?}", pair.psi_sigma, pair.u_sigma);
    println!("C_P   = {:.6}  (sampled {:.6})", c.C_P, sampled_kernel_growth(&s.kernel, s.dim, 2.0 * r));
    println!(
        "C_L   = {:.6}  (sampled {:.6})",
        c.C_L,
        sampled_state_growth(&s.state_cost, &pair.psi_sigma, r)
    );
    println!("C_Psi = {:.6}", c.C_Psi);
    println!("R     = {:.6}", c.R);
    println!("C0    = {:.6}", c.C0);
    Ok(())
}

fn main() -> mft::Result<()> {
    run_example()
}
