//! Running cost, trapezoid objective, and the dissipativity-deficit diagnostic.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlGrid, ParticleState, Trajectory};
use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::scenario::{Scenario, StaticPair};
use crate::vecops::{self, cumulative_trapezoid, trapezoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub state_part: f64,
    pub control_part: f64,
    /// Running cost `f_N` at each node.
    pub samples: Vec<f64>,
}

/// Cumulative dissipativity integrals on the node grid.
///
/// `rhs` is the squared-sum form `(1/N)(|psi - psi_sigma|_N + |u - u_sigma|_N)^2`,
/// `rhs_sos` the sum-of-squares form `(1/N)(|psi - psi_sigma|_N^2 + |u - u_sigma|_N^2)`,
/// both multiplied by `c_diss`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipativityCurve {
    pub tau: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub deficit: Vec<f64>,
    pub min_deficit: f64,
    pub rhs_sos: Vec<f64>,
    pub deficit_sos: Vec<f64>,
    pub min_deficit_sos: f64,
    /// `int |x - psi_sigma|^2 + |u - u_sigma|^2 d mu_N` at each node.
    pub measure_integrand: Vec<f64>,
    pub c_diss: f64,
}

/// Per-particle `L + Psi` terms summed, split by part.
fn node_parts(s: &Scenario, x: &[f64], u: &[f64]) -> (f64, f64) {
    let mut state = 0.0;
    let mut control = 0.0;
    for (xk, uk) in x.chunks(s.dim).zip(u.chunks(s.dim)) {
        state += s.state_cost.value(xk);
        control += s.control_cost.value(uk);
    }
    let inv_n = 1.0 / s.particles as f64;
    (state * inv_n, control * inv_n)
}

/// `f_N = (1/N) sum_k L(psi_k) + Psi(u_k)`
pub fn running_cost(state: &ParticleState, controls: &[f64], s: &Scenario) -> Result<f64> {
    if state.dim != s.dim || controls.len() != state.positions.len() {
        return Err(Error::Dimension(format!(
            "{} positions vs {} controls in dim {}",
            state.positions.len(),
            controls.len(),
            s.dim
        )));
    }
    let (l, p) = node_parts(s, &state.positions, controls);
    Ok(l + p)
}

fn check_grid(traj: &Trajectory, u: &ControlGrid, s: &Scenario) -> Result<()> {
    u.check(s)?;
    if traj.steps() != u.steps
        || traj.particles != s.particles
        || traj.dim != s.dim
        || traj.times[0] != u.a
        || *traj.times.last().unwrap() != u.b
    {
        return Err(Error::Dimension(
            "trajectory and control grid do not share the node grid".into(),
        ));
    }
    Ok(())
}

/// Composite trapezoid of the running cost over the node grid.
pub fn objective(traj: &Trajectory, u: &ControlGrid, s: &Scenario) -> Result<CostBreakdown> {
    check_grid(traj, u, s)?;
    let steps = traj.steps();
    let mut state_samples = Vec::with_capacity(steps + 1);
    let mut control_samples = Vec::with_capacity(steps + 1);
    for m in 0..=steps {
        let (l, p) = node_parts(s, traj.state(m), u.at_node(m));
        state_samples.push(l);
        control_samples.push(p);
    }
    let dt = u.dt();
    let state_part = trapezoid(dt, &state_samples);
    let control_part = trapezoid(dt, &control_samples);
    Ok(CostBreakdown {
        total: state_part + control_part,
        state_part,
        control_part,
        samples: state_samples
            .iter()
            .zip(&control_samples)
            .map(|(l, p)| l + p)
            .collect(),
    })
}

/// `(|psi - psi_sigma|_N, |u - u_sigma|_N)` at one node.
pub(crate) fn deviation_norms(x: &[f64], u: &[f64], pair: &StaticPair, dim: usize) -> (f64, f64) {
    let mut xs = 0.0;
    let mut us = 0.0;
    for (xk, uk) in x.chunks(dim).zip(u.chunks(dim)) {
        xs += vecops::dist_sq(xk, &pair.psi_sigma);
        us += vecops::dist_sq(uk, &pair.u_sigma);
    }
    (xs.sqrt(), us.sqrt())
}

/// `(1/N)(|psi - psi_sigma|_N + |u - u_sigma|_N)^2` at every node.
pub fn squared_sum_integrand(traj: &Trajectory, pair: &StaticPair) -> Vec<f64> {
    let inv_n = 1.0 / traj.particles as f64;
    (0..=traj.steps())
        .map(|m| {
            let (a, b) = deviation_norms(traj.state(m), traj.controls.at_node(m), pair, traj.dim);
            inv_n * (a + b) * (a + b)
        })
        .collect()
}

/// `(1/N)(sum_k |psi_k - psi_sigma|^2 + sum_k |u_k - u_sigma|^2)` at every node.
pub fn sum_of_squares_integrand(traj: &Trajectory, pair: &StaticPair) -> Vec<f64> {
    let inv_n = 1.0 / traj.particles as f64;
    (0..=traj.steps())
        .map(|m| {
            let (a, b) = deviation_norms(traj.state(m), traj.controls.at_node(m), pair, traj.dim);
            inv_n * (a * a + b * b)
        })
        .collect()
}

/// The same sum-of-squares integrand, evaluated as an integral against the
/// empirical measure of the (state, control) pairs.
pub fn measure_integrand(traj: &Trajectory, pair: &StaticPair) -> Vec<f64> {
    let d = traj.dim;
    (0..=traj.steps())
        .map(|m| {
            let mu = EmpiricalMeasure::from_pairs(traj.state(m), traj.controls.at_node(m), d);
            mu.expectation(|z| {
                vecops::dist_sq(&z[..d], &pair.psi_sigma) + vecops::dist_sq(&z[d..], &pair.u_sigma)
            })
        })
        .collect()
}

pub fn dissipativity_deficit(
    traj: &Trajectory,
    u: &ControlGrid,
    pair: &StaticPair,
    s: &Scenario,
) -> Result<DissipativityCurve> {
    check_grid(traj, u, s)?;
    if traj.controls != *u {
        return Err(Error::Dimension(
            "control grid is not the one that generated the trajectory".into(),
        ));
    }
    let dt = u.dt();
    let cost = objective(traj, u, s)?;
    let c = s.turnpike.c_diss;
    let lhs = cumulative_trapezoid(dt, &cost.samples);
    let sq: Vec<f64> = squared_sum_integrand(traj, pair).iter().map(|v| c * v).collect();
    let measure = measure_integrand(traj, pair);
    let sos: Vec<f64> = measure.iter().map(|v| c * v).collect();
    let rhs = cumulative_trapezoid(dt, &sq);
    let rhs_sos = cumulative_trapezoid(dt, &sos);
    let deficit: Vec<f64> = lhs.iter().zip(&rhs).map(|(l, r)| l - r).collect();
    let deficit_sos: Vec<f64> = lhs.iter().zip(&rhs_sos).map(|(l, r)| l - r).collect();
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DissipativityCurve {
        tau: traj.times.clone(),
        min_deficit: min(&deficit),
        min_deficit_sos: min(&deficit_sos),
        lhs,
        rhs,
        deficit,
        rhs_sos,
        deficit_sos,
        measure_integrand: measure,
        c_diss: c,
    })
}
