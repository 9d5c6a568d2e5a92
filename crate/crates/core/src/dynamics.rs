//! Interaction drift, fixed-step RK4 transcription of the controlled particle
//! system, and the stabilizing feedback law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Kernel, Scenario, StaticPair};
use crate::vecops;

/// Positions of `N` particles in `R^d` at one time, stored flat (`N * d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub time: f64,
    pub dim: usize,
    pub positions: Vec<f64>,
}

impl ParticleState {
    pub fn new(time: f64, dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim == 0 || !positions.len().is_multiple_of(dim) {
            return Err(Error::Dimension(format!(
                "{} coordinates is not a multiple of dim = {dim}",
                positions.len()
            )));
        }
        if !vecops::all_finite(&positions) {
            return Err(Error::NonFinite { time });
        }
        Ok(Self {
            time,
            dim,
            positions,
        })
    }

    pub fn particles(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn particle(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    fn check(&self, s: &Scenario) -> Result<()> {
        if self.dim != s.dim || self.positions.len() != s.dim * s.particles {
            return Err(Error::Dimension(format!(
                "state has {} particles in dim {}, scenario expects {} in dim {}",
                self.particles(),
                self.dim,
                s.particles,
                s.dim
            )));
        }
        Ok(())
    }
}

/// Piecewise-constant per-particle controls on a uniform grid. The value of
/// interval `m` applies on `[t_m, t_{m+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    pub a: f64,
    pub b: f64,
    pub steps: usize,
    pub particles: usize,
    pub dim: usize,
    /// Flat `steps * particles * dim`.
    pub values: Vec<f64>,
}

impl ControlGrid {
    pub fn zeros(s: &Scenario) -> Self {
        Self {
            a: s.a,
            b: s.b,
            steps: s.steps,
            particles: s.particles,
            dim: s.dim,
            values: vec![0.0; s.steps * s.particles * s.dim],
        }
    }

    /// Same value for every particle and interval.
    pub fn constant(s: &Scenario, value: &[f64]) -> Self {
        let mut grid = Self::zeros(s);
        for chunk in grid.values.chunks_mut(s.dim) {
            chunk.copy_from_slice(value);
        }
        grid
    }

    pub fn from_values(s: &Scenario, values: Vec<f64>) -> Result<Self> {
        let mut grid = Self::zeros(s);
        if values.len() != grid.values.len() {
            return Err(Error::Dimension(format!(
                "control grid needs {} values, got {}",
                grid.values.len(),
                values.len()
            )));
        }
        grid.values = values;
        Ok(grid)
    }

    pub fn dt(&self) -> f64 {
        (self.b - self.a) / self.steps as f64
    }

    fn block(&self) -> usize {
        self.particles * self.dim
    }

    /// Controls of all particles on interval `m`.
    pub fn interval(&self, m: usize) -> &[f64] {
        let n = self.block();
        &self.values[m * n..(m + 1) * n]
    }

    pub fn interval_mut(&mut self, m: usize) -> &mut [f64] {
        let n = self.block();
        &mut self.values[m * n..(m + 1) * n]
    }

    /// Control attributed to node `m`: the interval starting there, with the
    /// last node reusing the last interval.
    pub fn at_node(&self, m: usize) -> &[f64] {
        self.interval(m.min(self.steps - 1))
    }

    pub(crate) fn check(&self, s: &Scenario) -> Result<()> {
        if self.steps != s.steps
            || self.particles != s.particles
            || self.dim != s.dim
            || self.a != s.a
            || self.b != s.b
            || self.values.len() != self.steps * self.block()
        {
            return Err(Error::Dimension(
                "control grid does not match the scenario's time grid".into(),
            ));
        }
        if !vecops::all_finite(&self.values) {
            return Err(Error::Invalid("control values must be finite".into()));
        }
        Ok(())
    }
}

/// States at all `M + 1` node times together with the controls that drove them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub particles: usize,
    pub dim: usize,
    /// Flat `(M + 1) * N * d`.
    pub states: Vec<f64>,
    pub controls: ControlGrid,
    pub dt: f64,
    pub scheme: String,
    pub substeps: usize,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn state(&self, m: usize) -> &[f64] {
        let n = self.particles * self.dim;
        &self.states[m * n..(m + 1) * n]
    }

    pub fn particle_state(&self, m: usize) -> ParticleState {
        ParticleState {
            time: self.times[m],
            dim: self.dim,
            positions: self.state(m).to_vec(),
        }
    }

    pub fn final_state(&self) -> ParticleState {
        self.particle_state(self.steps())
    }
}

pub(crate) fn node_times(a: f64, b: f64, steps: usize) -> Vec<f64> {
    let dt = (b - a) / steps as f64;
    (0..=steps)
        .map(|m| if m == steps { b } else { a + m as f64 * dt })
        .collect()
}

/// `out_k = (1/N) sum_i P(x_i - x_k)` for flat positions `x`.
pub(crate) fn drift_into(kernel: &Kernel, dim: usize, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    if matches!(kernel, Kernel::Zero) {
        return;
    }
    let n = x.len() / dim;
    let inv_n = 1.0 / n as f64;
    let mut z = vec![0.0; dim];
    let mut p = vec![0.0; dim];
    for k in 0..n {
        let xk = &x[k * dim..(k + 1) * dim];
        let ok = &mut out[k * dim..(k + 1) * dim];
        for i in 0..n {
            if i == k {
                continue;
            }
            let xi = &x[i * dim..(i + 1) * dim];
            for j in 0..dim {
                z[j] = xi[j] - xk[j];
            }
            kernel.apply(&z, &mut p);
            vecops::axpy(inv_n, &p, ok);
        }
    }
}

/// `out += DF(x)^T v` where `F` is the flat drift map.
pub(crate) fn add_drift_jacobian_transpose(
    kernel: &Kernel,
    dim: usize,
    x: &[f64],
    v: &[f64],
    out: &mut [f64],
) {
    if matches!(kernel, Kernel::Zero) {
        return;
    }
    let n = x.len() / dim;
    let inv_n = 1.0 / n as f64;
    let mut z = vec![0.0; dim];
    let mut acc = vec![0.0; dim];
    // F_k depends on x_i and x_k through P(x_i - x_k)
    for k in 0..n {
        let vk = &v[k * dim..(k + 1) * dim];
        if vk.iter().all(|c| *c == 0.0) {
            continue;
        }
        for i in 0..n {
            if i == k {
                continue;
            }
            for j in 0..dim {
                z[j] = x[i * dim + j] - x[k * dim + j];
            }
            acc.iter_mut().for_each(|c| *c = 0.0);
            kernel.add_jacobian_transpose(&z, vk, inv_n, &mut acc);
            for j in 0..dim {
                out[i * dim + j] += acc[j];
                out[k * dim + j] -= acc[j];
            }
        }
    }
}

/// Interaction velocity of every particle.
pub fn drift(state: &ParticleState, s: &Scenario) -> Result<Vec<f64>> {
    state.check(s)?;
    let mut out = vec![0.0; state.positions.len()];
    drift_into(&s.kernel, s.dim, &state.positions, &mut out);
    Ok(out)
}

/// Scratch space for one RK4 step.
pub(crate) struct Rk4Work {
    pub k: [Vec<f64>; 4],
    pub y: Vec<f64>,
}

impl Rk4Work {
    pub fn new(n: usize) -> Self {
        Self {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            y: vec![0.0; n],
        }
    }
}

/// One classical RK4 step of `x' = rhs(x)` in place.
pub(crate) fn rk4_step<F>(x: &mut [f64], h: f64, work: &mut Rk4Work, mut rhs: F)
where
    F: FnMut(&[f64], &mut [f64]),
{
    let Rk4Work { k, y } = work;
    let [k1, k2, k3, k4] = k;
    rhs(x, k1);
    for j in 0..x.len() {
        y[j] = x[j] + 0.5 * h * k1[j];
    }
    rhs(y, k2);
    for j in 0..x.len() {
        y[j] = x[j] + 0.5 * h * k2[j];
    }
    rhs(y, k3);
    for j in 0..x.len() {
        y[j] = x[j] + h * k3[j];
    }
    rhs(y, k4);
    for j in 0..x.len() {
        x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
}

/// Integrates the controlled system with the grid's piecewise-constant controls.
pub fn integrate(initial: &ParticleState, u: &ControlGrid, s: &Scenario) -> Result<Trajectory> {
    initial.check(s)?;
    u.check(s)?;
    if initial.time != s.a {
        return Err(Error::Invalid(format!(
            "initial state is at t = {}, expected a = {}",
            initial.time, s.a
        )));
    }
    let times = node_times(s.a, s.b, s.steps);
    let n = initial.positions.len();
    let h = s.dt() / s.substeps as f64;
    let mut states = Vec::with_capacity((s.steps + 1) * n);
    states.extend_from_slice(&initial.positions);
    let mut x = initial.positions.clone();
    let mut work = Rk4Work::new(n);
    for m in 0..s.steps {
        let um = u.interval(m);
        for _ in 0..s.substeps {
            rk4_step(&mut x, h, &mut work, |y, out| {
                drift_into(&s.kernel, s.dim, y, out);
                vecops::axpy(1.0, um, out);
            });
        }
        if !vecops::all_finite(&x) {
            return Err(Error::NonFinite { time: times[m + 1] });
        }
        states.extend_from_slice(&x);
    }
    Ok(Trajectory {
        times,
        particles: s.particles,
        dim: s.dim,
        states,
        controls: u.clone(),
        dt: s.dt(),
        scheme: "rk4".into(),
        substeps: s.substeps,
    })
}

fn feedback_into(kernel: &Kernel, dim: usize, beta: f64, sigma: &[f64], x: &[f64], out: &mut [f64]) {
    drift_into(kernel, dim, x, out);
    for (k, chunk) in out.chunks_mut(dim).enumerate() {
        for j in 0..dim {
            chunk[j] = beta * (sigma[j] - x[k * dim + j]) - chunk[j];
        }
    }
}

/// Stabilizing feedback `u_k = beta (psi_sigma - psi_k) - (1/N) sum_l P(psi_l - psi_k)`.
pub fn feedback_control(state: &ParticleState, pair: &StaticPair, s: &Scenario) -> Result<Vec<f64>> {
    state.check(s)?;
    let mut out = vec![0.0; state.positions.len()];
    feedback_into(&s.kernel, s.dim, s.beta, &pair.psi_sigma, &state.positions, &mut out);
    Ok(out)
}

/// Integrates the feedback closed loop (the law is re-evaluated inside every
/// RK4 stage) and records the feedback sampled at the left node of each interval.
pub fn simulate_feedback(
    initial: &ParticleState,
    pair: &StaticPair,
    s: &Scenario,
) -> Result<(Trajectory, ControlGrid)> {
    initial.check(s)?;
    if initial.time != s.a {
        return Err(Error::Invalid(format!(
            "initial state is at t = {}, expected a = {}",
            initial.time, s.a
        )));
    }
    let times = node_times(s.a, s.b, s.steps);
    let n = initial.positions.len();
    let h = s.dt() / s.substeps as f64;
    let sigma = &pair.psi_sigma;
    let mut controls = ControlGrid::zeros(s);
    let mut states = Vec::with_capacity((s.steps + 1) * n);
    states.extend_from_slice(&initial.positions);
    let mut x = initial.positions.clone();
    let mut work = Rk4Work::new(n);
    let mut fb = vec![0.0; n];
    for m in 0..s.steps {
        feedback_into(&s.kernel, s.dim, s.beta, sigma, &x, controls.interval_mut(m));
        for _ in 0..s.substeps {
            rk4_step(&mut x, h, &mut work, |y, out| {
                feedback_into(&s.kernel, s.dim, s.beta, sigma, y, &mut fb);
                drift_into(&s.kernel, s.dim, y, out);
                vecops::axpy(1.0, &fb, out);
            });
        }
        if !vecops::all_finite(&x) {
            return Err(Error::NonFinite { time: times[m + 1] });
        }
        states.extend_from_slice(&x);
    }
    let traj = Trajectory {
        times,
        particles: s.particles,
        dim: s.dim,
        states,
        controls: controls.clone(),
        dt: s.dt(),
        scheme: "rk4-closed-loop".into(),
        substeps: s.substeps,
    };
    Ok((traj, controls))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ControlCost, InitialSpec, StateCost, TurnpikeParams};

    fn scenario(kernel: Kernel, dim: usize, initial: Vec<Vec<f64>>, b: f64, steps: usize) -> Scenario {
        Scenario {
            dim,
            particles: initial.len(),
            a: 0.0,
            b,
            steps,
            substeps: 1,
            kernel,
            state_cost: StateCost::Quadratic {
                target: vec![0.0; dim],
                weight: 1.0,
            },
            control_cost: ControlCost { gamma: 1.0, q: 2.0 },
            beta: 1.0,
            initial: InitialSpec::Explicit(initial),
            initial_states: vec![],
            turnpike: TurnpikeParams::default(),
        }
        .validated()
        .unwrap()
    }

    #[test]
    fn drift_two_particle_linear() {
        let s = scenario(Kernel::Linear { kappa: 1.0 }, 1, vec![vec![0.0], vec![2.0]], 1.0, 10);
        let v = drift(&s.initial_state(), &s).unwrap();
        assert_eq!(v, vec![1.0, -1.0]);
    }

    #[test]
    fn drift_vanishes_on_uniform_state_and_zero_kernel() {
        for kernel in [
            Kernel::Zero,
            Kernel::Linear { kappa: 3.0 },
            Kernel::BoundedInfluence { c: 2.0 },
        ] {
            let s = scenario(kernel, 2, vec![vec![1.5, -0.5]; 3], 1.0, 10);
            assert!(drift(&s.initial_state(), &s).unwrap().iter().all(|v| *v == 0.0));
        }
        let s = scenario(Kernel::Zero, 2, vec![vec![1.0, 2.0], vec![-3.0, 0.5]], 1.0, 10);
        assert!(drift(&s.initial_state(), &s).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_control_with_zero_kernel_is_exact() {
        let s = scenario(Kernel::Zero, 2, vec![vec![1.0, 2.0], vec![-1.0, 0.0]], 2.0, 7);
        let u = ControlGrid::constant(&s, &[0.5, -0.25]);
        let traj = integrate(&s.initial_state(), &u, &s).unwrap();
        let end = traj.state(s.steps);
        assert!((end[0] - 2.0).abs() < 1e-14);
        assert!((end[1] - 1.5).abs() < 1e-14);
        assert!((end[2] - 0.0).abs() < 1e-14);
        assert!((end[3] - -0.5).abs() < 1e-14);
        assert_eq!(traj.times[0], 0.0);
        assert_eq!(*traj.times.last().unwrap(), 2.0);
    }

    #[test]
    fn single_particle_feels_no_interaction() {
        let s = scenario(Kernel::Linear { kappa: 1.0 }, 1, vec![vec![0.3]], 1.0, 4);
        let u = ControlGrid::constant(&s, &[2.0]);
        let traj = integrate(&s.initial_state(), &u, &s).unwrap();
        assert!((traj.state(4)[0] - 2.3).abs() < 1e-14);
    }

    #[test]
    fn linear_two_particle_matches_closed_form() {
        // psi_1' = kappa/2 (psi_2 - psi_1) = -kappa psi_1 while psi_2 = -psi_1
        for (kappa, rate) in [(1.0, -1.0), (-1.0, 1.0)] {
            let s = scenario(Kernel::Linear { kappa }, 1, vec![vec![1.0], vec![-1.0]], 1.0, 100);
            let traj = integrate(&s.initial_state(), &ControlGrid::zeros(&s), &s).unwrap();
            for (m, t) in traj.times.iter().enumerate() {
                let exact = (rate * t).exp();
                assert!((traj.state(m)[0] - exact).abs() < 1e-9 * exact);
                assert!((traj.state(m)[1] + exact).abs() < 1e-9 * exact);
            }
        }
    }

    #[test]
    fn feedback_example_values() {
        let s = scenario(Kernel::Zero, 1, vec![vec![1.0]], 1.0, 10);
        let mut s2 = s.clone();
        s2.beta = 2.0;
        let pair = StaticPair {
            psi_sigma: vec![0.0],
            u_sigma: vec![0.0],
        };
        assert_eq!(feedback_control(&s2.initial_state(), &pair, &s2).unwrap(), vec![-2.0]);
    }

    #[test]
    fn feedback_cancels_drift() {
        let s = scenario(
            Kernel::BoundedInfluence { c: 1.3 },
            2,
            vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.2, -0.7]],
            1.0,
            10,
        );
        let pair = StaticPair {
            psi_sigma: vec![0.1, 0.2],
            u_sigma: vec![0.0, 0.0],
        };
        let state = s.initial_state();
        let u = feedback_control(&state, &pair, &s).unwrap();
        let d = drift(&state, &s).unwrap();
        for k in 0..3 {
            for j in 0..2 {
                let expect = s.beta * (pair.psi_sigma[j] - state.particle(k)[j]);
                assert!((u[2 * k + j] + d[2 * k + j] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn feedback_halves_distance_after_ln2() {
        let mut s = scenario(Kernel::Zero, 1, vec![vec![4.0]], 1.0, 1000);
        s.beta = std::f64::consts::LN_2;
        let pair = StaticPair {
            psi_sigma: vec![0.0],
            u_sigma: vec![0.0],
        };
        let (traj, _) = simulate_feedback(&s.initial_state(), &pair, &s).unwrap();
        assert!((traj.state(1000)[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn feedback_from_static_state_stays_put() {
        let s = scenario(Kernel::BoundedInfluence { c: 1.0 }, 2, vec![vec![0.0, 0.0]; 4], 3.0, 30);
        let pair = StaticPair {
            psi_sigma: vec![0.0, 0.0],
            u_sigma: vec![0.0, 0.0],
        };
        let (traj, u) = simulate_feedback(&s.initial_state(), &pair, &s).unwrap();
        assert!(traj.states.iter().all(|v| *v == 0.0));
        assert!(u.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn overflow_reports_time() {
        let s = scenario(Kernel::Linear { kappa: -1e3 }, 1, vec![vec![1e250], vec![-1e250]], 1.0, 10);
        match integrate(&s.initial_state(), &ControlGrid::zeros(&s), &s) {
            Err(Error::NonFinite { time }) => assert!(time > 0.0),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn drift_jacobian_transpose_matches_finite_differences() {
        let kernel = Kernel::BoundedInfluence { c: 0.8 };
        let x = [0.1, 0.4, -0.3, 1.2, 0.9, -0.6];
        let v = [0.5, -0.2, 0.3, 0.7, -0.4, 0.1];
        let mut jt = vec![0.0; 6];
        add_drift_jacobian_transpose(&kernel, 2, &x, &v, &mut jt);
        let h = 1e-6;
        for j in 0..6 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (mut fp, mut fm) = (vec![0.0; 6], vec![0.0; 6]);
            drift_into(&kernel, 2, &xp, &mut fp);
            drift_into(&kernel, 2, &xm, &mut fm);
            let fd: f64 = (0..6).map(|i| v[i] * (fp[i] - fm[i]) / (2.0 * h)).sum();
            assert!((fd - jt[j]).abs() < 1e-8, "{j}: {fd} vs {}", jt[j]);
        }
    }
}
