//! Sectioned TOML config: `[scenario]`, `[kernel]`, `[cost]`, `[solver]`,
//! `[turnpike]`. Unknown keys anywhere are rejected.
//!
//! ```toml
//! [scenario]
//! dim = 2
//! particles = 16
//! a = 0.0
//! b = 10.0
//! steps = 200
//! beta = 1.0
//! sampler = "uniform-ball"   # or `initial = [[x, y], ...]`
//! center = [2.0, 1.0]
//! radius = 0.75
//! seed = 7
//!
//! [kernel]
//! kind = "bounded-influence"
//! c = 1.0
//!
//! [cost]
//! state = "quadratic"
//! target = [0.0, 0.0]
//! gamma = 8.0
//! ```

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ocp::{SolverConfig, WarmStart};
use crate::scenario::{
    ControlCost, InitialSpec, Kernel, Sampler, Scenario, StateCost, TurnpikeParams,
};

/// Everything one config file describes.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: Scenario,
    pub solver: SolverConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: RawScenario,
    kernel: RawKernel,
    cost: RawCost,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    turnpike: RawTurnpike,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    dim: usize,
    particles: usize,
    a: f64,
    b: f64,
    steps: usize,
    #[serde(default = "one")]
    substeps: usize,
    #[serde(default = "one_f")]
    beta: f64,
    initial: Option<Vec<Vec<f64>>>,
    sampler: Option<String>,
    seed: Option<u64>,
    center: Option<Vec<f64>>,
    radius: Option<f64>,
    std: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    kind: String,
    kappa: Option<f64>,
    c: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    #[serde(default = "quadratic")]
    state: String,
    target: Vec<f64>,
    #[serde(default = "one_f")]
    weight: f64,
    delta: Option<f64>,
    #[serde(default = "one_f")]
    gamma: f64,
    #[serde(default = "two_f")]
    q: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    tol: Option<f64>,
    max_iter: Option<usize>,
    armijo_c1: Option<f64>,
    backtrack: Option<f64>,
    warm_start: Option<String>,
    lbfgs: Option<bool>,
    memory: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTurnpike {
    lambda: Option<f64>,
    alpha: Option<f64>,
    c_diss: Option<f64>,
    gate_tol: Option<f64>,
    radius: Option<f64>,
    sweep: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn two_f() -> f64 {
    2.0
}
fn quadratic() -> String {
    "quadratic".into()
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}

/// Parses and validates a full config document.
pub fn load(text: &str) -> Result<Config> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;

    let kernel = match raw.kernel.kind.as_str() {
        "zero" => Kernel::Zero,
        "linear" => Kernel::Linear {
            kappa: raw
                .kernel
                .kappa
                .ok_or_else(|| Error::Invalid("linear kernel needs kappa".into()))?,
        },
        "bounded-influence" => Kernel::BoundedInfluence {
            c: raw
                .kernel
                .c
                .ok_or_else(|| Error::Invalid("bounded-influence kernel needs c".into()))?,
        },
        other => return invalid(format!("unknown kernel kind '{other}'")),
    };

    let state_cost = match raw.cost.state.as_str() {
        "quadratic" => StateCost::Quadratic {
            target: raw.cost.target,
            weight: raw.cost.weight,
        },
        "pseudo-huber" => StateCost::PseudoHuber {
            target: raw.cost.target,
            weight: raw.cost.weight,
            delta: raw
                .cost
                .delta
                .ok_or_else(|| Error::Invalid("pseudo-huber cost needs delta".into()))?,
        },
        other => return invalid(format!("unknown state cost '{other}'")),
    };
    let control_cost = ControlCost {
        gamma: raw.cost.gamma,
        q: raw.cost.q,
    };

    let sc = raw.scenario;
    let initial = match (sc.initial, sc.sampler) {
        (Some(_), Some(_)) => return invalid("give either initial or sampler, not both"),
        (None, None) => return invalid("initial states need either initial or sampler"),
        (Some(points), None) => {
            if sc.seed.is_some() || sc.center.is_some() || sc.radius.is_some() || sc.std.is_some() {
                return invalid("seed/center/radius/std only apply to sampler-based initial states");
            }
            InitialSpec::Explicit(points)
        }
        (None, Some(name)) => {
            let seed = match sc.seed {
                Some(seed) => seed,
                None => return invalid("sampler-based initial states need a seed"),
            };
            let center = sc
                .center
                .ok_or_else(|| Error::Invalid("sampler needs center".into()))?;
            let sampler = match name.as_str() {
                "uniform-ball" => Sampler::UniformBall {
                    center,
                    radius: match sc.radius {
                        Some(r) if r >= 0.0 => r,
                        _ => return invalid("uniform-ball sampler needs radius >= 0"),
                    },
                },
                "gaussian" => Sampler::Gaussian {
                    center,
                    std: match sc.std {
                        Some(s) if s >= 0.0 => s,
                        _ => return invalid("gaussian sampler needs std >= 0"),
                    },
                },
                "point" => Sampler::Point { center },
                other => return invalid(format!("unknown sampler '{other}'")),
            };
            InitialSpec::Sampled { sampler, seed }
        }
    };

    let defaults = TurnpikeParams::default();
    let tp = raw.turnpike;
    let turnpike = TurnpikeParams {
        lambda: tp.lambda.unwrap_or(defaults.lambda),
        alpha: tp.alpha.unwrap_or(defaults.alpha),
        c_diss: tp.c_diss.unwrap_or(defaults.c_diss),
        gate_tol: tp.gate_tol.unwrap_or(defaults.gate_tol),
        radius: tp.radius,
        sweep: tp.sweep.unwrap_or_default(),
    };

    let scenario = Scenario {
        dim: sc.dim,
        particles: sc.particles,
        a: sc.a,
        b: sc.b,
        steps: sc.steps,
        substeps: sc.substeps,
        kernel,
        state_cost,
        control_cost,
        beta: sc.beta,
        initial,
        initial_states: Vec::new(),
        turnpike,
    }
    .validated()?;

    let d = SolverConfig::default();
    let rs = raw.solver;
    let solver = SolverConfig {
        tol: rs.tol.unwrap_or(d.tol),
        max_iter: rs.max_iter.unwrap_or(d.max_iter),
        armijo_c1: rs.armijo_c1.unwrap_or(d.armijo_c1),
        backtrack: rs.backtrack.unwrap_or(d.backtrack),
        warm_start: match rs.warm_start.as_deref() {
            None => d.warm_start,
            Some("feedback") => WarmStart::Feedback,
            Some("zeros") => WarmStart::Zeros,
            Some(other) => return invalid(format!("unknown warm_start '{other}'")),
        },
        lbfgs: rs.lbfgs.unwrap_or(d.lbfgs),
        memory: rs.memory.unwrap_or(d.memory),
    };
    solver.validate()?;

    Ok(Config { scenario, solver })
}

/// Parses a config and keeps only the scenario.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    load(text).map(|c| c.scenario)
}
