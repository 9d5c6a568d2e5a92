//! Empirical measures, exact Wasserstein-1 distances between them, and
//! particle-count convergence studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_feedback, ParticleState, Trajectory};
use crate::error::{Error, Result};
use crate::objective::objective;
use crate::ocp::{solve, SolverConfig};
use crate::scenario::{compute_static_pair, InitialSpec, Scenario};
use crate::vecops;

/// Default cap on the atom count of the assignment path.
pub const DEFAULT_ASSIGNMENT_CAP: usize = 512;

/// Equal-weight atoms in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub dim: usize,
    /// Flat `n * d`.
    pub atoms: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, atoms: Vec<f64>) -> Result<Self> {
        if dim == 0 || !atoms.len().is_multiple_of(dim) {
            return Err(Error::Dimension(format!(
                "{} coordinates is not a multiple of dim = {dim}",
                atoms.len()
            )));
        }
        if !vecops::all_finite(&atoms) {
            return Err(Error::Invalid("atoms must be finite".into()));
        }
        Ok(Self { dim, atoms })
    }

    /// Atoms of the product space `R^d x R^d` at `(x_k, u_k)`.
    pub fn from_pairs(x: &[f64], u: &[f64], dim: usize) -> Self {
        let mut atoms = Vec::with_capacity(2 * x.len());
        for (xk, uk) in x.chunks(dim).zip(u.chunks(dim)) {
            atoms.extend_from_slice(xk);
            atoms.extend_from_slice(uk);
        }
        Self {
            dim: 2 * dim,
            atoms,
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.atoms.chunks(self.dim)
    }

    /// `int f d mu`
    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let w = self.weight();
        self.iter().map(|x| w * f(x)).sum()
    }

    /// Same measure with every atom repeated `times` times.
    pub fn replicated(&self, times: usize) -> Self {
        let mut atoms = Vec::with_capacity(self.atoms.len() * times);
        for x in self.iter() {
            for _ in 0..times {
                atoms.extend_from_slice(x);
            }
        }
        Self {
            dim: self.dim,
            atoms,
        }
    }

    pub fn translated(&self, v: &[f64]) -> Self {
        let mut atoms = self.atoms.clone();
        for chunk in atoms.chunks_mut(self.dim) {
            vecops::axpy(1.0, v, chunk);
        }
        Self {
            dim: self.dim,
            atoms,
        }
    }
}

/// `mu_N` of a particle state.
pub fn empirical(state: &ParticleState) -> EmpiricalMeasure {
    EmpiricalMeasure {
        dim: state.dim,
        atoms: state.positions.clone(),
    }
}

/// Minimum-cost perfect matching on a square cost matrix (row-major `n * n`).
/// Returns `assignment[row] = column`. O(n^3) shortest augmenting paths with
/// potentials.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    // 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Brings both measures to the same atom count by replication.
fn equalize(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> (EmpiricalMeasure, EmpiricalMeasure) {
    let (n, m) = (mu.len(), nu.len());
    let lcm = n / gcd(n, m) * m;
    (mu.replicated(lcm / n), nu.replicated(lcm / m))
}

/// 1D distance by matching sorted atoms.
pub fn wasserstein1_sorted(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim != 1 || nu.dim != 1 {
        return Err(Error::Dimension("sorted matching needs d = 1".into()));
    }
    let (mu, nu) = equalize(mu, nu);
    let mut x = mu.atoms;
    let mut y = nu.atoms;
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    Ok(x.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
}

/// Exact distance via minimum-cost perfect matching on Euclidean costs.
pub fn wasserstein1_assignment(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    cap: usize,
) -> Result<f64> {
    if mu.dim != nu.dim {
        return Err(Error::Dimension(format!(
            "measures live in dim {} and {}",
            mu.dim, nu.dim
        )));
    }
    let (mu, nu) = equalize(mu, nu);
    let n = mu.len();
    if n > cap {
        return Err(Error::AssignmentTooLarge { size: n, cap });
    }
    let mut cost = Vec::with_capacity(n * n);
    for x in mu.iter() {
        for y in nu.iter() {
            cost.push(vecops::dist(x, y));
        }
    }
    let assignment = hungarian(&cost, n);
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    Ok(total / n as f64)
}

/// Exact W1 between equal-weight empirical measures; sorted matching in 1D,
/// Hungarian assignment otherwise.
pub fn wasserstein1(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim != nu.dim {
        return Err(Error::Dimension(format!(
            "measures live in dim {} and {}",
            mu.dim, nu.dim
        )));
    }
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::Invalid("measures need at least one atom".into()));
    }
    if mu.dim == 1 {
        wasserstein1_sorted(mu, nu)
    } else {
        wasserstein1_assignment(mu, nu, DEFAULT_ASSIGNMENT_CAP)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Feedback,
    Solved,
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feedback" => Ok(Policy::Feedback),
            "solved" => Ok(Policy::Solved),
            other => Err(Error::Invalid(format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub seed: u64,
    pub n: usize,
    /// `sup_t W1(mu_N(t), mu_ref(t))` over node times.
    pub sup_w1: f64,
    pub objective: f64,
    /// `|J_N - J_ref|`
    pub objective_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub n: usize,
    pub median_sup_w1: f64,
    pub median_objective: f64,
    pub median_objective_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n_list: Vec<usize>,
    /// The largest particle count, used as stand-in for the mean-field limit.
    pub reference_n: usize,
    pub reference_note: String,
    pub policy: Policy,
    pub seeds: Vec<u64>,
    pub rows: Vec<ConvergenceRow>,
    pub summary: Vec<ConvergenceSummary>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn run_policy(s: &Scenario, policy: Policy, cfg: &SolverConfig) -> Result<(Trajectory, f64)> {
    match policy {
        Policy::Feedback => {
            let pair = compute_static_pair(s)?;
            let (traj, u) = simulate_feedback(&s.initial_state(), &pair, s)?;
            let value = objective(&traj, &u, s)?.total;
            Ok((traj, value))
        }
        Policy::Solved => {
            let sol = solve(s, cfg)?;
            Ok((sol.trajectory, sol.value))
        }
    }
}

/// Runs the same policy for every particle count with nested initial samples
/// (the first `N` draws of one seeded stream) and compares against the largest count.
pub fn convergence_study(
    s: &Scenario,
    n_list: &[usize],
    policy: Policy,
    seeds: &[u64],
    cfg: &SolverConfig,
) -> Result<ConvergenceReport> {
    let sampler = match &s.initial {
        InitialSpec::Sampled { sampler, .. } => sampler.clone(),
        InitialSpec::Explicit(_) => {
            return Err(Error::Study(
                "nested sampling needs a sampler-based initial state".into(),
            ))
        }
    };
    if n_list.is_empty() || seeds.is_empty() {
        return Err(Error::Study("need at least one N and one seed".into()));
    }
    if n_list.windows(2).any(|w| w[1] < w[0]) || n_list[0] == 0 {
        return Err(Error::Study("N list must be positive and ascending".into()));
    }
    let n_ref = *n_list.last().unwrap();
    if let Some(n) = n_list.iter().find(|n| !n_ref.is_multiple_of(**n)) {
        return Err(Error::Study(format!(
            "N = {n} does not divide the reference N = {n_ref}"
        )));
    }

    let per_seed: Vec<Result<Vec<ConvergenceRow>>> = seeds
        .par_iter()
        .map(|&seed| {
            let stream = sampler.draw(n_ref, seed);
            let scenario_for = |n: usize| -> Result<Scenario> {
                let mut sn = s.clone();
                sn.particles = n;
                sn.initial = InitialSpec::Sampled {
                    sampler: sampler.clone(),
                    seed,
                };
                let sn = sn.validated()?;
                debug_assert_eq!(sn.initial_states[..], stream[..n * s.dim]);
                Ok(sn)
            };
            let (ref_traj, ref_value) = run_policy(&scenario_for(n_ref)?, policy, cfg)?;
            let ref_measures: Vec<EmpiricalMeasure> = (0..=ref_traj.steps())
                .map(|m| empirical(&ref_traj.particle_state(m)))
                .collect();
            n_list
                .iter()
                .map(|&n| {
                    let (traj, value) = if n == n_ref {
                        (ref_traj.clone(), ref_value)
                    } else {
                        run_policy(&scenario_for(n)?, policy, cfg)?
                    };
                    let mut sup: f64 = 0.0;
                    for (m, nu) in ref_measures.iter().enumerate() {
                        let mu = empirical(&traj.particle_state(m)).replicated(n_ref / n);
                        sup = sup.max(wasserstein1(&mu, nu)?);
                    }
                    Ok(ConvergenceRow {
                        seed,
                        n,
                        sup_w1: sup,
                        objective: value,
                        objective_gap: (value - ref_value).abs(),
                    })
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    let summary = n_list
        .iter()
        .map(|&n| {
            let pick = |f: fn(&ConvergenceRow) -> f64| {
                let v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(f).collect();
                median(&v)
            };
            ConvergenceSummary {
                n,
                median_sup_w1: pick(|r| r.sup_w1),
                median_objective: pick(|r| r.objective),
                median_objective_gap: pick(|r| r.objective_gap),
            }
        })
        .collect();
    Ok(ConvergenceReport {
        n_list: n_list.to_vec(),
        reference_n: n_ref,
        reference_note: format!("largest-N run (N = {n_ref}) used as proxy for the mean-field limit"),
        policy,
        seeds: seeds.to_vec(),
        rows,
        summary,
    })
}
