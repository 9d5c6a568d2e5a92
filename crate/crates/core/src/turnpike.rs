//! Interior-decay diagnostics of solved trajectories: the tail integrals
//! `A_*`, the refined `alpha` form, `B_*`, their bounds, and horizon sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::objective::{dissipativity_deficit, squared_sum_integrand, sum_of_squares_integrand};
use crate::ocp::{solve, OptimalSolution, SolverConfig, Termination};
use crate::scenario::{
    compute_static_pair, estimate_constants, invariant_radius, EffectiveConstants, Scenario,
    StaticPair,
};
use crate::vecops::{dist, trapezoid};

/// One inequality `lhs <= bound` with the tail start it was evaluated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub t_lo: f64,
    pub lhs: f64,
    pub bound: f64,
    /// `bound - lhs`
    pub margin: f64,
}

impl BoundCheck {
    fn new(t_lo: f64, lhs: f64, bound: f64) -> Self {
        Self {
            t_lo,
            lhs,
            bound,
            margin: bound - lhs,
        }
    }

    pub fn holds(&self) -> bool {
        self.margin >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnpikeReport {
    pub digest: String,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub constants: EffectiveConstants,
    pub static_pair: StaticPair,
    /// `(1/N) sum_k |psi0_k - psi_sigma|`, the factor of the `A_*` and `alpha` bounds.
    pub mean_initial_distance: f64,
    /// `(1/N) |psi0 - psi_sigma|_N`, the factor of the `B_*` bound.
    pub scaled_initial_norm: f64,
    pub optimal_value: f64,
    pub termination: Termination,
    pub min_deficit: f64,
    pub gate_tol: f64,
    /// Dissipativity deficit stayed above `-gate_tol`; the bounds are only claimed then.
    pub gate: bool,
    pub a_star: BoundCheck,
    pub odethm1: BoundCheck,
    pub b_star: Option<BoundCheck>,
    pub b_star_note: Option<String>,
    /// Sum-of-squares tail integral against the empirical measures.
    pub measure_a_star: BoundCheck,
    /// Full-interval integral `int (|psi - psi_sigma|_N + |u - u_sigma|_N)^2 dt <= N C0 m`.
    pub integral: BoundCheck,
    pub t0: Option<f64>,
    pub t1: Option<f64>,
}

fn snap(traj: &Trajectory, t_lo: f64) -> Result<usize> {
    let a = traj.times[0];
    let b = *traj.times.last().unwrap();
    let slack = 1e-9 * (b - a);
    if !(t_lo >= a - slack && t_lo <= b + slack) {
        return Err(Error::Invalid(format!("t_lo = {t_lo} outside [{a}, {b}]")));
    }
    let m = ((t_lo - a) / traj.dt).round() as usize;
    Ok(m.min(traj.steps()))
}

fn tail_integral(samples: &[f64], dt: f64, from: usize) -> f64 {
    if from + 1 >= samples.len() {
        0.0
    } else {
        trapezoid(dt, &samples[from..])
    }
}

/// `(1/N) int_{t_lo}^b (|psi - psi_sigma|_N + |u - u_sigma|_N)^2 dt`, with
/// `t_lo` snapped to the nearest node.
pub fn interior_metric(traj: &Trajectory, pair: &StaticPair, t_lo: f64) -> Result<f64> {
    let from = snap(traj, t_lo)?;
    Ok(tail_integral(&squared_sum_integrand(traj, pair), traj.dt, from))
}

/// Same tail, sum-of-squares integrand.
pub fn interior_metric_sos(traj: &Trajectory, pair: &StaticPair, t_lo: f64) -> Result<f64> {
    let from = snap(traj, t_lo)?;
    Ok(tail_integral(&sum_of_squares_integrand(traj, pair), traj.dt, from))
}

/// Earliest node in `[lo, hi]` whose integrand is at most `level`.
fn first_node_below(traj: &Trajectory, samples: &[f64], lo: f64, hi: f64, level: f64) -> Option<f64> {
    let eps = 1e-9 * traj.dt;
    traj.times
        .iter()
        .zip(samples)
        .find(|(t, e)| **t >= lo - eps && **t <= hi + eps && **e <= level)
        .map(|(t, _)| *t)
}

/// Evaluates every interior-decay inequality for one solved trajectory.
pub fn theorem_bounds(
    sol: &OptimalSolution,
    s: &Scenario,
    pair: &StaticPair,
    consts: &EffectiveConstants,
    lambda: f64,
    alpha: f64,
) -> Result<TurnpikeReport> {
    if !(lambda > 0.0 && lambda < 1.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid("lambda and alpha must lie in (0, 1)".into()));
    }
    let traj = &sol.trajectory;
    let (a, b) = (s.a, s.b);
    let len = b - a;
    let n = s.particles as f64;
    let c0 = consts.C0;

    let dists: Vec<f64> = s
        .initial_states
        .chunks(s.dim)
        .map(|p| dist(p, &pair.psi_sigma))
        .collect();
    let mean_dist = dists.iter().sum::<f64>() / n;
    let scaled_norm = dists.iter().map(|d| d * d).sum::<f64>().sqrt() / n;

    let sq = squared_sum_integrand(traj, pair);
    let sos = sum_of_squares_integrand(traj, pair);
    let tail = |samples: &[f64], t: f64| snap(traj, t).map(|m| tail_integral(samples, traj.dt, m));

    let t_a = a + lambda * len;
    let a_star = BoundCheck::new(t_a, tail(&sq, t_a)?, c0 * c0 / (lambda * len) * mean_dist);
    let measure_a_star =
        BoundCheck::new(t_a, tail(&sos, t_a)?, c0 * c0 / (lambda * len) * mean_dist);

    let t_alpha = a + (1.0 - alpha * alpha) * len;
    let odethm1 = BoundCheck::new(
        t_alpha,
        tail(&sq, t_alpha)?,
        odethm1_bound(c0, alpha, len) * mean_dist,
    );

    let (b_star, b_star_note) = if len > 1.0 {
        let t_b = a + 2.0 * len.sqrt() - 1.0;
        let check = BoundCheck::new(t_b, tail(&sq, t_b)?, odethm1a_bound(c0, len) * scaled_norm);
        (Some(check), None)
    } else {
        (None, Some(format!("b - a = {len} <= 1")))
    };

    let integral = BoundCheck::new(a, n * tail(&sq, a)?, n * c0 * mean_dist);

    let t0 = first_node_below(traj, &sq, a, t_a, c0 * mean_dist / (lambda * len));
    let t1 = first_node_below(
        traj,
        &sq,
        b - alpha * len,
        b - alpha * alpha * len,
        c0 * c0 * mean_dist / (alpha * (1.0 - alpha).powi(2) * len * len),
    );

    let curve = dissipativity_deficit(traj, &sol.controls, pair, s)?;
    let gate_tol = s.turnpike.gate_tol;

    Ok(TurnpikeReport {
        digest: s.digest(),
        a,
        b,
        lambda,
        alpha,
        constants: *consts,
        static_pair: pair.clone(),
        mean_initial_distance: mean_dist,
        scaled_initial_norm: scaled_norm,
        optimal_value: sol.value,
        termination: sol.termination,
        min_deficit: curve.min_deficit,
        gate_tol,
        gate: curve.min_deficit >= -gate_tol,
        a_star,
        odethm1,
        b_star,
        b_star_note,
        measure_a_star,
        integral,
        t0,
        t1,
    })
}

/// `C0^3 / (alpha (1 - alpha)^2 (b - a)^2)`
pub fn odethm1_bound(c0: f64, alpha: f64, len: f64) -> f64 {
    c0.powi(3) / (alpha * (1.0 - alpha).powi(2) * len * len)
}

/// `C0^3 / (sqrt(b - a) (sqrt(b - a) - 1))`
pub fn odethm1a_bound(c0: f64, len: f64) -> f64 {
    let r = len.sqrt();
    c0.powi(3) / (r * (r - 1.0))
}

/// Static pair, constants on the invariant ball (or the configured radius),
/// and the solved problem, all for one scenario.
pub fn analyze(s: &Scenario, cfg: &SolverConfig) -> Result<(TurnpikeReport, OptimalSolution)> {
    let pair = compute_static_pair(s)?;
    let radius = s.turnpike.radius.unwrap_or_else(|| invariant_radius(s, &pair));
    let consts = estimate_constants(s, &pair, radius)?;
    let sol = solve(s, cfg)?;
    let report = theorem_bounds(&sol, s, &pair, &consts, s.turnpike.lambda, s.turnpike.alpha)?;
    Ok((report, sol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub b: f64,
    pub report: Option<TurnpikeReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln A_*` against `ln (b - a)`.
    pub slope: Option<f64>,
    pub theoretical_slope: f64,
}

pub const SWEEP_COLUMNS: [&str; 12] = [
    "b",
    "A_star",
    "bound_odethm",
    "margin_odethm",
    "lhs_odethm1",
    "bound_odethm1",
    "B_star",
    "bound_odethm1a",
    "min_deficit",
    "gate",
    "t0",
    "t1",
];

/// Solves the problem for every right endpoint (same `a`, same initial
/// states, same step size) and evaluates the bounds. Failed rows carry
/// their error and do not stop the sweep.
pub fn horizon_sweep(
    s: &Scenario,
    b_list: &[f64],
    lambda: f64,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<SweepReport> {
    if b_list.is_empty() {
        return Err(Error::Invalid("sweep needs at least one b".into()));
    }
    let pair = compute_static_pair(s)?;
    let radius = s.turnpike.radius.unwrap_or_else(|| invariant_radius(s, &pair));
    let consts = estimate_constants(s, &pair, radius)?;
    let rows: Vec<SweepRow> = b_list
        .par_iter()
        .map(|&b| {
            let run = || -> Result<TurnpikeReport> {
                let sb = s.with_horizon(b)?;
                let sol = solve(&sb, cfg)?;
                theorem_bounds(&sol, &sb, &pair, &consts, lambda, alpha)
            };
            match run() {
                Ok(report) => SweepRow {
                    b,
                    report: Some(report),
                    error: None,
                },
                Err(e) => SweepRow {
                    b,
                    report: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.report.as_ref())
        .filter(|r| r.a_star.lhs > 0.0)
        .map(|r| ((r.b - r.a).ln(), r.a_star.lhs.ln()))
        .collect();
    Ok(SweepReport {
        rows,
        slope: fit_slope(&points),
        theoretical_slope: -1.0,
    })
}

fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
