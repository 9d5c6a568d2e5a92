//! Problem description: interaction kernel, running costs, horizon, particle
//! count and initial states, plus the derived static pair and the effective
//! constants that enter the cheap-control bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops::{self, axpy, dist, norm, norm_sq};

/// Number of low-discrepancy points used for every sampled constant.
pub const CONSTANT_SAMPLES: usize = 10_000;

/// Slack allowed between a sampled supremum and its closed form.
pub const CLOSED_FORM_SLACK: f64 = 1e-9;

/// Pairwise interaction kernel `P : R^d -> R^d` with `P(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Kernel {
    Zero,
    /// `P(x) = kappa * x`
    Linear { kappa: f64 },
    /// `P(x) = H(x) x` with `H(x) = c / (1 + |x|^2)`
    BoundedInfluence { c: f64 },
}

impl Kernel {
    /// `out = P(z)`
    #[inline]
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        let scale = match *self {
            Kernel::Zero => 0.0,
            Kernel::Linear { kappa } => kappa,
            Kernel::BoundedInfluence { c } => c / (1.0 + norm_sq(z)),
        };
        for (o, zi) in out.iter_mut().zip(z) {
            *o = scale * zi;
        }
    }

    /// `out += weight * DP(z)^T v`
    #[inline]
    pub fn add_jacobian_transpose(&self, z: &[f64], v: &[f64], weight: f64, out: &mut [f64]) {
        match *self {
            Kernel::Zero => {}
            Kernel::Linear { kappa } => axpy(weight * kappa, v, out),
            Kernel::BoundedInfluence { c } => {
                // DP(z) = H I - 2c / (1+|z|^2)^2 z z^T, symmetric
                let denom = 1.0 + norm_sq(z);
                let h = c / denom;
                let zv = vecops::dot(z, v);
                let k = -2.0 * c * zv / (denom * denom);
                for ((o, vi), zi) in out.iter_mut().zip(v).zip(z) {
                    *o += weight * (h * vi + k * zi);
                }
            }
        }
    }

    /// Closed-form growth constant `C_P` with `|P(x)| <= C_P |x|`.
    pub fn growth_bound(&self) -> f64 {
        match *self {
            Kernel::Zero => 0.0,
            Kernel::Linear { kappa } => kappa.abs(),
            Kernel::BoundedInfluence { c } => c.abs(),
        }
    }
}

/// State running cost `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateCost {
    /// `L(x) = weight * |x - target|^2`
    Quadratic { target: Vec<f64>, weight: f64 },
    /// `L(x) = weight * delta^2 * (sqrt(1 + |x - target|^2 / delta^2) - 1)`
    PseudoHuber {
        target: Vec<f64>,
        weight: f64,
        delta: f64,
    },
}

impl StateCost {
    pub fn target(&self) -> &[f64] {
        match self {
            StateCost::Quadratic { target, .. } | StateCost::PseudoHuber { target, .. } => target,
        }
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            StateCost::Quadratic { target, weight } => weight * vecops::dist_sq(x, target),
            StateCost::PseudoHuber {
                target,
                weight,
                delta,
            } => {
                let r2 = vecops::dist_sq(x, target);
                weight * delta * delta * ((1.0 + r2 / (delta * delta)).sqrt() - 1.0)
            }
        }
    }

    /// `out += scale * grad L(x)`
    #[inline]
    pub fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            StateCost::Quadratic { target, weight } => {
                for ((o, xi), ti) in out.iter_mut().zip(x).zip(target) {
                    *o += scale * 2.0 * weight * (xi - ti);
                }
            }
            StateCost::PseudoHuber {
                target,
                weight,
                delta,
            } => {
                let r2 = vecops::dist_sq(x, target);
                let f = weight / (1.0 + r2 / (delta * delta)).sqrt();
                for ((o, xi), ti) in out.iter_mut().zip(x).zip(target) {
                    *o += scale * f * (xi - ti);
                }
            }
        }
    }

    /// Minimizer in closed form, when the cost has one on record.
    pub fn closed_form_minimizer(&self) -> Option<Vec<f64>> {
        match self {
            StateCost::Quadratic { target, .. } | StateCost::PseudoHuber { target, .. } => {
                Some(target.clone())
            }
        }
    }

    /// `sup_{0 < |x - target| <= r} L(x) / |x - target|`; both built-in costs
    /// have `L / |x - target|` increasing in the radius, so it is the value at `r`.
    pub fn linear_bound(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            StateCost::Quadratic { weight, .. } => weight * r,
            StateCost::PseudoHuber { weight, delta, .. } => {
                weight * delta * delta * ((1.0 + r * r / (delta * delta)).sqrt() - 1.0) / r
            }
        }
    }

    /// Copy with the cost multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            StateCost::Quadratic { weight, .. } | StateCost::PseudoHuber { weight, .. } => {
                *weight *= factor
            }
        }
        out
    }
}

/// Control running cost `Psi(u) = gamma * |u|^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCost {
    pub gamma: f64,
    pub q: f64,
}

impl ControlCost {
    #[inline]
    pub fn value(&self, u: &[f64]) -> f64 {
        if self.gamma == 0.0 {
            return 0.0;
        }
        if self.q == 2.0 {
            self.gamma * norm_sq(u)
        } else {
            self.gamma * norm(u).powf(self.q)
        }
    }

    /// `out += scale * grad Psi(u)`; the zero subgradient is used at `u = 0`.
    #[inline]
    pub fn add_gradient(&self, u: &[f64], scale: f64, out: &mut [f64]) {
        if self.gamma == 0.0 {
            return;
        }
        let f = if self.q == 2.0 {
            2.0 * self.gamma
        } else {
            let r = norm(u);
            if r == 0.0 {
                return;
            }
            self.gamma * self.q * r.powf(self.q - 2.0)
        };
        axpy(scale * f, u, out);
    }

    /// Raw constant of the growth condition `Lip(Psi, B(0,R)) <= C R^(q-1)`.
    pub fn raw_lipschitz(&self) -> f64 {
        self.gamma * self.q
    }

    /// Lipschitz constant of `Psi` on `B(0, radius)`.
    pub fn lipschitz_on_ball(&self, radius: f64) -> f64 {
        self.raw_lipschitz() * radius.powf(self.q - 1.0)
    }
}

/// Seeded initial-state generators. Points are drawn one after another from a
/// single stream, so the first `n` points for a seed do not depend on how many
/// are requested in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sampler", rename_all = "kebab-case")]
pub enum Sampler {
    UniformBall { center: Vec<f64>, radius: f64 },
    Gaussian { center: Vec<f64>, std: f64 },
    /// Every particle at `center`.
    Point { center: Vec<f64> },
}

impl Sampler {
    pub fn center(&self) -> &[f64] {
        match self {
            Sampler::UniformBall { center, .. }
            | Sampler::Gaussian { center, .. }
            | Sampler::Point { center } => center,
        }
    }

    /// Flat `n * d` array of points.
    pub fn draw(&self, n: usize, seed: u64) -> Vec<f64> {
        let center = self.center();
        let d = center.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            match self {
                Sampler::UniformBall { radius, .. } => {
                    let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let len = norm(&dir);
                    let u: f64 = rng.random();
                    let r = radius * u.powf(1.0 / d as f64);
                    for (c, g) in center.iter().zip(&dir) {
                        out.push(c + r * g / len);
                    }
                }
                Sampler::Gaussian { std, .. } => {
                    for c in center {
                        let g: f64 = rng.sample(StandardNormal);
                        out.push(c + std * g);
                    }
                }
                Sampler::Point { .. } => out.extend_from_slice(center),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialSpec {
    Explicit(Vec<Vec<f64>>),
    Sampled { sampler: Sampler, seed: u64 },
}

/// Parameters of the turnpike diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnpikeParams {
    pub lambda: f64,
    pub alpha: f64,
    /// Scale applied to the right-hand side of the dissipativity inequality.
    pub c_diss: f64,
    /// Gate tolerance on the minimum dissipativity deficit.
    pub gate_tol: f64,
    /// Override for the invariant-ball radius used by the constants.
    pub radius: Option<f64>,
    /// Default horizon list for sweeps.
    pub sweep: Vec<f64>,
}

impl Default for TurnpikeParams {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            alpha: 0.5,
            c_diss: 1.0,
            gate_tol: 1e-8,
            radius: None,
            sweep: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub dim: usize,
    pub particles: usize,
    pub a: f64,
    pub b: f64,
    /// Number of control intervals `M` on `[a, b]`.
    pub steps: usize,
    /// RK4 substeps per control interval.
    pub substeps: usize,
    pub kernel: Kernel,
    pub state_cost: StateCost,
    pub control_cost: ControlCost,
    /// Feedback rate of the stabilizing law.
    pub beta: f64,
    pub initial: InitialSpec,
    /// Materialized initial positions, flat `N * d`.
    pub initial_states: Vec<f64>,
    pub turnpike: TurnpikeParams,
}

impl Scenario {
    /// Checks every invariant and materializes `initial_states` from `initial`.
    pub fn validated(mut self) -> Result<Self> {
        let fail = |msg: String| Err(Error::Invalid(msg));
        if self.dim == 0 {
            return fail("dim must be a positive integer".into());
        }
        if self.particles == 0 {
            return fail("particles must be a positive integer".into());
        }
        if !(self.a.is_finite() && self.b.is_finite()) {
            return fail("a and b must be finite".into());
        }
        if self.b <= self.a {
            return fail("b must exceed a".into());
        }
        if self.steps < 2 {
            return fail("steps must be at least 2".into());
        }
        if self.substeps == 0 {
            return fail("substeps must be at least 1".into());
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return fail("beta must be positive".into());
        }
        if !(self.control_cost.gamma >= 0.0 && self.control_cost.gamma.is_finite()) {
            return fail("gamma must be non-negative".into());
        }
        if !(self.control_cost.q >= 1.0 && self.control_cost.q.is_finite()) {
            return fail("q must be at least 1".into());
        }
        let tp = &self.turnpike;
        if !(tp.lambda > 0.0 && tp.lambda < 1.0) {
            return fail("lambda must lie strictly inside (0, 1)".into());
        }
        if !(tp.alpha > 0.0 && tp.alpha < 1.0) {
            return fail("alpha must lie strictly inside (0, 1)".into());
        }
        if !(tp.c_diss > 0.0 && tp.c_diss.is_finite()) {
            return fail("c_diss must be positive".into());
        }
        if !(tp.gate_tol >= 0.0) {
            return fail("gate_tol must be non-negative".into());
        }
        if let Some(r) = tp.radius {
            if !(r > 0.0 && r.is_finite()) {
                return fail("radius must be positive".into());
            }
        }
        if self.state_cost.target().len() != self.dim {
            return fail(format!(
                "cost target has {} components, expected dim = {}",
                self.state_cost.target().len(),
                self.dim
            ));
        }
        match &self.state_cost {
            StateCost::Quadratic { weight, .. } | StateCost::PseudoHuber { weight, .. }
                if !(*weight >= 0.0) =>
            {
                return fail("state cost weight must be non-negative".into());
            }
            StateCost::PseudoHuber { delta, .. } if !(*delta > 0.0) => {
                return fail("pseudo-huber delta must be positive".into());
            }
            _ => {}
        }
        match &self.kernel {
            Kernel::Linear { kappa } if !kappa.is_finite() => {
                return fail("kernel kappa must be finite".into())
            }
            Kernel::BoundedInfluence { c } if !c.is_finite() => {
                return fail("kernel c must be finite".into())
            }
            _ => {}
        }
        self.initial_states = match &self.initial {
            InitialSpec::Explicit(points) => {
                if points.len() != self.particles {
                    return fail(format!(
                        "initial has {} points, expected particles = {}",
                        points.len(),
                        self.particles
                    ));
                }
                if points.iter().any(|p| p.len() != self.dim) {
                    return fail(format!("every initial point needs dim = {} entries", self.dim));
                }
                points.concat()
            }
            InitialSpec::Sampled { sampler, .. } if sampler.center().len() != self.dim => {
                return fail(format!("sampler center needs dim = {} entries", self.dim));
            }
            InitialSpec::Sampled { sampler, seed } => sampler.draw(self.particles, *seed),
        };
        if !vecops::all_finite(&self.initial_states) {
            return fail("initial states must be finite".into());
        }
        Ok(self)
    }

    pub fn dt(&self) -> f64 {
        (self.b - self.a) / self.steps as f64
    }

    pub fn horizon(&self) -> f64 {
        self.b - self.a
    }

    pub fn initial_state(&self) -> crate::dynamics::ParticleState {
        crate::dynamics::ParticleState {
            time: self.a,
            dim: self.dim,
            positions: self.initial_states.clone(),
        }
    }

    /// Same problem on `[a, b]`, keeping the step size of `self`.
    pub fn with_horizon(&self, b: f64) -> Result<Self> {
        let mut s = self.clone();
        s.b = b;
        s.steps = (((b - self.a) / self.dt()).round() as usize).max(2);
        s.validated()
    }

    /// Same problem with explicitly given initial positions (flat `n * d`).
    pub fn with_initial(&self, positions: Vec<f64>) -> Result<Self> {
        if !positions.len().is_multiple_of(self.dim) {
            return Err(Error::Dimension(format!(
                "{} coordinates is not a multiple of dim = {}",
                positions.len(),
                self.dim
            )));
        }
        let mut s = self.clone();
        s.particles = positions.len() / self.dim;
        s.initial = InitialSpec::Explicit(positions.chunks(self.dim).map(<[f64]>::to_vec).collect());
        s.validated()
    }

    /// Hex SHA-256 of the canonical JSON form of the scenario.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Constant state/control pair at which the system is at rest and the
/// running cost is minimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticPair {
    pub psi_sigma: Vec<f64>,
    pub u_sigma: Vec<f64>,
}

/// Fallback search for the minimizer of `L` when no closed form is on record.
pub fn minimize_state_cost(
    cost: &StateCost,
    start: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let mut x = start.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut step = 1.0;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        g.iter_mut().for_each(|v| *v = 0.0);
        cost.add_gradient(&x, 1.0, &mut g);
        residual = norm(&g);
        if residual <= tol {
            return Ok(x);
        }
        let f0 = cost.value(&x);
        let gg = residual * residual;
        step *= 2.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            if cost.value(&trial) <= f0 - 1e-4 * step * gg {
                x = trial;
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(Error::StaticPair {
                    iterations: max_iter,
                    residual,
                });
            }
        }
    }
    Err(Error::StaticPair {
        iterations: max_iter,
        residual,
    })
}

pub fn compute_static_pair(s: &Scenario) -> Result<StaticPair> {
    let psi_sigma = match s.state_cost.closed_form_minimizer() {
        Some(x) => x,
        None => {
            let mean = mean_point(&s.initial_states, s.dim);
            minimize_state_cost(&s.state_cost, &mean, 100_000, 1e-13)?
        }
    };
    let zero = vec![0.0; s.dim];
    let mut p0 = vec![0.0; s.dim];
    s.kernel.apply(&zero, &mut p0);
    if p0.iter().any(|v| *v != 0.0) {
        return Err(Error::Invalid("kernel violates P(0) = 0".into()));
    }
    Ok(StaticPair {
        psi_sigma,
        u_sigma: zero,
    })
}

fn mean_point(points: &[f64], dim: usize) -> Vec<f64> {
    let n = points.len() / dim;
    let mut m = vec![0.0; dim];
    for p in points.chunks(dim) {
        axpy(1.0 / n as f64, p, &mut m);
    }
    m
}

/// Radius of the smallest ball around `psi_sigma` holding every initial particle.
/// The feedback closed loop never leaves this ball.
pub fn invariant_radius(s: &Scenario, pair: &StaticPair) -> f64 {
    s.initial_states
        .chunks(s.dim)
        .map(|p| dist(p, &pair.psi_sigma))
        .fold(0.0, f64::max)
}

/// Constants of the cheap-control bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct EffectiveConstants {
    pub C_P: f64,
    pub C_L: f64,
    pub C_Psi: f64,
    pub R: f64,
    pub C0: f64,
}

impl EffectiveConstants {
    #[allow(non_snake_case)]
    pub fn cheap_control_constant(C_L: f64, C_Psi: f64, C_P: f64, beta: f64) -> f64 {
        (C_L + beta * C_Psi + 2.0 * C_P * C_Psi) / beta
    }
}

/// Closed-form constants on the ball of radius `radius`, each cross-checked
/// against a deterministic sampled supremum.
#[allow(non_snake_case)]
pub fn estimate_constants(s: &Scenario, pair: &StaticPair, radius: f64) -> Result<EffectiveConstants> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::Invalid("radius must be non-negative and finite".into()));
    }
    let C_P = s.kernel.growth_bound();
    let C_L = s.state_cost.linear_bound(radius);
    if radius > 0.0 {
        let sampled_p = sampled_kernel_growth(&s.kernel, s.dim, 2.0 * radius);
        check_closed_form("kernel growth C_P", sampled_p, C_P)?;
        let sampled_l = sampled_state_growth(&s.state_cost, &pair.psi_sigma, radius);
        check_closed_form("state growth C_L", sampled_l, C_L)?;
    }
    let control_radius = (s.beta + 2.0 * C_P) * radius;
    let C_Psi = s.control_cost.lipschitz_on_ball(control_radius);
    let C0 = EffectiveConstants::cheap_control_constant(C_L, C_Psi, C_P, s.beta);
    Ok(EffectiveConstants {
        C_P,
        C_L,
        C_Psi,
        R: radius,
        C0,
    })
}

fn check_closed_form(what: &'static str, sampled: f64, closed: f64) -> Result<()> {
    if sampled > closed + CLOSED_FORM_SLACK * closed.abs().max(1.0) {
        return Err(Error::ConstantCheck {
            what,
            sampled,
            closed,
        });
    }
    Ok(())
}

/// Sampled `sup |P(x)| / |x|` over `B(0, radius)`.
pub fn sampled_kernel_growth(kernel: &Kernel, dim: usize, radius: f64) -> f64 {
    let mut out = vec![0.0; dim];
    vecops::halton_ball(&vec![0.0; dim], radius, CONSTANT_SAMPLES)
        .iter()
        .filter_map(|x| {
            let r = norm(x);
            (r > 0.0).then(|| {
                kernel.apply(x, &mut out);
                norm(&out) / r
            })
        })
        .fold(0.0, f64::max)
}

/// Sampled `sup L(x) / |x - center|` over `B(center, radius)`.
pub fn sampled_state_growth(cost: &StateCost, center: &[f64], radius: f64) -> f64 {
    vecops::halton_ball(center, radius, CONSTANT_SAMPLES)
        .iter()
        .filter_map(|x| {
            let r = dist(x, center);
            (r > 0.0).then(|| cost.value(x) / r)
        })
        .fold(0.0, f64::max)
}

/// The bundled consensus example: bounded-influence attraction with a
/// quadratic tracking cost.
pub fn consensus() -> Scenario {
    crate::config::load_scenario(CONSENSUS_TOML).expect("bundled consensus scenario is valid")
}

/// Text of the bundled consensus scenario.
pub const CONSENSUS_TOML: &str = include_str!("../scenarios/consensus.toml");
