//! Direct transcription of the finite-horizon problem: the controls are the
//! piecewise-constant grid values, the objective is the trapezoid value of the
//! RK4 trajectory, and gradients come from the exact discrete adjoint.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    add_drift_jacobian_transpose, drift_into, integrate, rk4_step, simulate_feedback, ControlGrid,
    Rk4Work, Trajectory,
};
use crate::error::{Error, Result};
use crate::objective::objective;
use crate::scenario::{compute_static_pair, Scenario};
use crate::vecops::{axpy, dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarmStart {
    Feedback,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop when `|grad| / max(1, |J|) <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub warm_start: WarmStart,
    /// Limited-memory BFGS directions instead of steepest descent.
    pub lbfgs: bool,
    pub memory: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 5000,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            warm_start: WarmStart::Feedback,
            lbfgs: true,
            memory: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Invalid("solver tol must be positive".into()));
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return Err(Error::Invalid("armijo_c1 must lie in (0, 1)".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Invalid("backtrack factor must lie in (0, 1)".into()));
        }
        if self.lbfgs && self.memory == 0 {
            return Err(Error::Invalid("lbfgs memory must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchStall,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max-iterations",
            Termination::LineSearchStall => "line-search stall",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalSolution {
    pub controls: ControlGrid,
    pub trajectory: Trajectory,
    /// Discrete optimal value, recomputed from `trajectory` and `controls`.
    pub value: f64,
    /// Objective of the warm-start controls.
    pub initial_value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub log: Vec<IterationLog>,
}

/// Discrete objective and its exact gradient with respect to every control value.
pub fn value_and_gradient(u: &ControlGrid, s: &Scenario) -> Result<(f64, Vec<f64>)> {
    let traj = integrate(&s.initial_state(), u, s)?;
    let value = objective(&traj, u, s)?.total;
    Ok((value, adjoint(&traj, u, s)))
}

/// Gradient of the discrete objective, shaped like the control grid.
pub fn gradient(u: &ControlGrid, s: &Scenario) -> Result<Vec<f64>> {
    value_and_gradient(u, s).map(|(_, g)| g)
}

/// Reverse sweep through the trapezoid weights and every RK4 stage.
fn adjoint(traj: &Trajectory, u: &ControlGrid, s: &Scenario) -> Vec<f64> {
    let steps = s.steps;
    let dim = s.dim;
    let n = s.particles * dim;
    let dt = s.dt();
    let h = dt / s.substeps as f64;
    let inv_n = 1.0 / s.particles as f64;
    let weight = |m: usize| if m == 0 || m == steps { 0.5 * dt } else { dt };

    let mut grad = vec![0.0; u.values.len()];
    let add_cost_grad = |x: &[f64], um: &[f64], w: f64, lam: &mut [f64], gu: &mut [f64]| {
        for k in 0..s.particles {
            let r = k * dim..(k + 1) * dim;
            s.state_cost.add_gradient(&x[r.clone()], w * inv_n, &mut lam[r.clone()]);
            s.control_cost.add_gradient(&um[r.clone()], w * inv_n, &mut gu[r]);
        }
    };

    let mut lam = vec![0.0; n];
    add_cost_grad(
        traj.state(steps),
        u.interval(steps - 1),
        weight(steps),
        &mut lam,
        &mut grad[(steps - 1) * n..steps * n],
    );

    let mut work = Rk4Work::new(n);
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; n]; s.substeps];
    let mut ys: [Vec<f64>; 4] = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut kbar: [Vec<f64>; 4] = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut ybar = vec![0.0; n];
    let mut ubar = vec![0.0; n];
    let rhs = |um: &[f64], y: &[f64], out: &mut [f64]| {
        drift_into(&s.kernel, dim, y, out);
        axpy(1.0, um, out);
    };

    for m in (0..steps).rev() {
        let um = u.interval(m);
        // substep start states of this interval
        starts[0].copy_from_slice(traj.state(m));
        for j in 1..s.substeps {
            let (done, rest) = starts.split_at_mut(j);
            rest[0].copy_from_slice(&done[j - 1]);
            rk4_step(&mut rest[0], h, &mut work, |y, out| rhs(um, y, out));
        }
        ubar.iter_mut().for_each(|v| *v = 0.0);
        for j in (0..s.substeps).rev() {
            let x = &starts[j];
            // rebuild stage inputs y1..y4
            let [y1, y2, y3, y4] = &mut ys;
            let [k1, k2, k3, _] = &mut work.k;
            y1.copy_from_slice(x);
            rhs(um, y1, k1);
            for i in 0..n {
                y2[i] = x[i] + 0.5 * h * k1[i];
            }
            rhs(um, y2, k2);
            for i in 0..n {
                y3[i] = x[i] + 0.5 * h * k2[i];
            }
            rhs(um, y3, k3);
            for i in 0..n {
                y4[i] = x[i] + h * k3[i];
            }

            // x+ = x + h/6 (k1 + 2 k2 + 2 k3 + k4)
            let [kb1, kb2, kb3, kb4] = &mut kbar;
            for i in 0..n {
                kb1[i] = h / 6.0 * lam[i];
                kb2[i] = h / 3.0 * lam[i];
                kb3[i] = h / 3.0 * lam[i];
                kb4[i] = h / 6.0 * lam[i];
            }
            // lam already holds d/dx of the identity term
            ybar.iter_mut().for_each(|v| *v = 0.0);
            add_drift_jacobian_transpose(&s.kernel, dim, y4, kb4, &mut ybar);
            axpy(1.0, kb4, &mut ubar);
            axpy(1.0, &ybar, &mut lam);
            axpy(h, &ybar, kb3);

            ybar.iter_mut().for_each(|v| *v = 0.0);
            add_drift_jacobian_transpose(&s.kernel, dim, y3, kb3, &mut ybar);
            axpy(1.0, kb3, &mut ubar);
            axpy(1.0, &ybar, &mut lam);
            axpy(0.5 * h, &ybar, kb2);

            ybar.iter_mut().for_each(|v| *v = 0.0);
            add_drift_jacobian_transpose(&s.kernel, dim, y2, kb2, &mut ybar);
            axpy(1.0, kb2, &mut ubar);
            axpy(1.0, &ybar, &mut lam);
            axpy(0.5 * h, &ybar, kb1);

            ybar.iter_mut().for_each(|v| *v = 0.0);
            add_drift_jacobian_transpose(&s.kernel, dim, y1, kb1, &mut ybar);
            axpy(1.0, kb1, &mut ubar);
            axpy(1.0, &ybar, &mut lam);
        }
        let gm = &mut grad[m * n..(m + 1) * n];
        axpy(1.0, &ubar, gm);
        add_cost_grad(traj.state(m), um, weight(m), &mut lam, gm);
    }
    grad
}

struct Evaluator<'a> {
    s: &'a Scenario,
    template: ControlGrid,
}

impl Evaluator<'_> {
    fn grid(&self, values: &[f64]) -> ControlGrid {
        let mut g = self.template.clone();
        g.values.copy_from_slice(values);
        g
    }

    fn value(&self, values: &[f64]) -> Option<f64> {
        let g = self.grid(values);
        let traj = integrate(&self.s.initial_state(), &g, self.s).ok()?;
        objective(&traj, &g, self.s).ok().map(|c| c.total).filter(|v| v.is_finite())
    }

    fn value_and_gradient(&self, values: &[f64]) -> Result<(f64, Vec<f64>)> {
        value_and_gradient(&self.grid(values), self.s)
    }
}

/// Two-loop recursion: `-H g` from the stored curvature pairs.
fn lbfgs_direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (sv, yv, rho) in pairs.iter().rev() {
        let a = rho * dot(sv, &q);
        axpy(-a, yv, &mut q);
        alphas.push(a);
    }
    if let Some((sv, yv, _)) = pairs.back() {
        let scale = dot(sv, yv) / dot(yv, yv);
        q.iter_mut().for_each(|v| *v *= scale);
    }
    for ((sv, yv, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(yv, &q);
        axpy(a - b, sv, &mut q);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Solves the transcribed problem from the configured warm start.
pub fn solve(s: &Scenario, cfg: &SolverConfig) -> Result<OptimalSolution> {
    cfg.validate()?;
    let start = match cfg.warm_start {
        WarmStart::Zeros => ControlGrid::zeros(s),
        WarmStart::Feedback => {
            let pair = compute_static_pair(s)?;
            simulate_feedback(&s.initial_state(), &pair, s)?.1
        }
    };
    let eval = Evaluator {
        s,
        template: start.clone(),
    };

    let mut x = start.values.clone();
    let (mut f, mut g) = eval.value_and_gradient(&x)?;
    let initial_value = f;
    let mut gnorm = norm(&g);
    let mut log = vec![IterationLog {
        iteration: 0,
        objective: f,
        gradient_norm: gnorm,
        step: 0.0,
    }];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut sd_step = 1.0;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for it in 1..=cfg.max_iter {
        if gnorm / f.abs().max(1.0) <= cfg.tol {
            termination = Termination::Converged;
            break;
        }
        let mut accepted = None;
        // quasi-Newton direction first, steepest descent as fallback
        for use_lbfgs in [cfg.lbfgs && !pairs.is_empty(), false] {
            let dir = if use_lbfgs {
                lbfgs_direction(&g, &pairs)
            } else {
                g.iter().map(|v| -v).collect()
            };
            let slope = dot(&g, &dir);
            if !(slope < 0.0) {
                continue;
            }
            let mut step = if use_lbfgs { 1.0 } else { sd_step };
            for _ in 0..80 {
                let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
                if let Some(ft) = eval.value(&trial) {
                    if ft <= f + cfg.armijo_c1 * step * slope {
                        accepted = Some((trial, ft, step, use_lbfgs));
                        break;
                    }
                }
                step *= cfg.backtrack;
            }
            if accepted.is_some() {
                break;
            }
            if !use_lbfgs {
                break;
            }
            pairs.clear();
        }
        let Some((x_new, _, step, used_lbfgs)) = accepted else {
            termination = Termination::LineSearchStall;
            break;
        };
        if !used_lbfgs {
            sd_step = step / cfg.backtrack;
        }
        let (f_new, g_new) = eval.value_and_gradient(&x_new)?;
        let sv: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&sv, &yv);
        if cfg.lbfgs && sy > 1e-12 * norm(&sv) * norm(&yv) && sy > 0.0 {
            pairs.push_back((sv, yv, 1.0 / sy));
            if pairs.len() > cfg.memory {
                pairs.pop_front();
            }
        }
        x = x_new;
        f = f_new;
        g = g_new;
        gnorm = norm(&g);
        iterations = it;
        log.push(IterationLog {
            iteration: it,
            objective: f,
            gradient_norm: gnorm,
            step,
        });
    }
    if termination == Termination::MaxIterations && gnorm / f.abs().max(1.0) <= cfg.tol {
        termination = Termination::Converged;
    }

    let controls = eval.grid(&x);
    let trajectory = integrate(&s.initial_state(), &controls, s)?;
    let value = objective(&trajectory, &controls, s)?.total;
    Ok(OptimalSolution {
        controls,
        trajectory,
        value,
        initial_value,
        gradient_norm: gnorm,
        iterations,
        termination,
        log,
    })
}

pub fn optimal_value(s: &Scenario, cfg: &SolverConfig) -> Result<f64> {
    solve(s, cfg).map(|sol| sol.value)
}

/// Central finite-difference gradient of the discrete objective (test oracle).
pub fn finite_difference_gradient(u: &ControlGrid, s: &Scenario, h: f64) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; u.values.len()];
    let mut probe = u.clone();
    let x0 = s.initial_state();
    for i in 0..u.values.len() {
        let orig = probe.values[i];
        probe.values[i] = orig + h;
        let fp = objective(&integrate(&x0, &probe, s)?, &probe, s)?.total;
        probe.values[i] = orig - h;
        let fm = objective(&integrate(&x0, &probe, s)?, &probe, s)?.total;
        probe.values[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ControlCost, InitialSpec, Kernel, StateCost, TurnpikeParams};

    fn scenario(kernel: Kernel, initial: Vec<Vec<f64>>, b: f64, steps: usize, gamma: f64) -> Scenario {
        let dim = initial[0].len();
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
            control_cost: ControlCost { gamma, q: 2.0 },
            beta: 1.0,
            initial: InitialSpec::Explicit(initial),
            initial_states: vec![],
            turnpike: TurnpikeParams::default(),
        }
        .validated()
        .unwrap()
    }

    fn max_rel_err(g: &[f64], fd: &[f64]) -> f64 {
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        g.iter().zip(fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
    }

    #[test]
    fn gradient_matches_finite_differences_with_substeps() {
        let mut s = scenario(
            Kernel::BoundedInfluence { c: 1.2 },
            vec![vec![1.0, 0.0], vec![-0.5, 0.8], vec![0.3, -1.1]],
            1.5,
            6,
            0.7,
        );
        s.substeps = 3;
        let values: Vec<f64> = (0..s.steps * 6).map(|i| ((i as f64) * 0.37).sin()).collect();
        let u = ControlGrid::from_values(&s, values).unwrap();
        let g = gradient(&u, &s).unwrap();
        let fd = finite_difference_gradient(&u, &s, 1e-5).unwrap();
        assert!(max_rel_err(&g, &fd) < 1e-6);
    }

    #[test]
    fn gradient_vanishes_at_static_pair() {
        let s = scenario(Kernel::Linear { kappa: 0.5 }, vec![vec![0.0, 0.0]; 3], 2.0, 10, 1.0);
        let g = gradient(&ControlGrid::zeros(&s), &s).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn control_gradient_is_linear_in_gamma() {
        // zero state cost isolates the control part
        let mut s = scenario(Kernel::Zero, vec![vec![0.0]], 1.0, 5, 1.0);
        s.state_cost = s.state_cost.scaled(0.0);
        let u = ControlGrid::from_values(&s, vec![0.1, -0.2, 0.3, 0.4, -0.5]).unwrap();
        let g1 = gradient(&u, &s).unwrap();
        s.control_cost.gamma = 2.0;
        let g2 = gradient(&u, &s).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn solve_from_static_state_is_trivial() {
        let s = scenario(Kernel::BoundedInfluence { c: 1.0 }, vec![vec![0.0, 0.0]; 4], 3.0, 30, 1.0);
        let sol = solve(&s, &SolverConfig::default()).unwrap();
        assert_eq!(sol.value, 0.0);
        assert!(sol.controls.values.iter().all(|v| *v == 0.0));
        assert_eq!(sol.termination, Termination::Converged);
    }

    #[test]
    fn solve_is_monotone_and_beats_warm_start() {
        let s = scenario(
            Kernel::BoundedInfluence { c: 1.0 },
            vec![vec![1.0, 0.5], vec![0.6, 1.3], vec![1.4, 0.9]],
            4.0,
            40,
            2.0,
        );
        for lbfgs in [true, false] {
            let cfg = SolverConfig {
                lbfgs,
                max_iter: 300,
                ..SolverConfig::default()
            };
            let sol = solve(&s, &cfg).unwrap();
            assert!(sol.value <= sol.initial_value);
            for w in sol.log.windows(2) {
                assert!(w[1].objective <= w[0].objective);
            }
            let recomputed = objective(&sol.trajectory, &sol.controls, &s).unwrap().total;
            assert_eq!(recomputed.to_bits(), sol.value.to_bits());
        }
    }

    #[test]
    fn scalar_lqr_approaches_riccati_value() {
        let s = scenario(Kernel::Zero, vec![vec![1.0]], 1.0, 200, 1.0);
        let cfg = SolverConfig {
            tol: 1e-10,
            ..SolverConfig::default()
        };
        let v = optimal_value(&s, &cfg).unwrap();
        assert!((v - 1f64.tanh()).abs() < 5e-3, "{v}");
    }

    #[test]
    fn invalid_solver_config_is_rejected() {
        let cfg = SolverConfig {
            backtrack: 1.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
