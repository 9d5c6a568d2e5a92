//! Controlled interacting-particle consensus dynamics, direct-transcription
//! optimal control, and turnpike / mean-field diagnostics.
//!
//! The usual pipeline: load a [`Scenario`] from TOML, compute its
//! [`StaticPair`] and [`EffectiveConstants`], run the feedback law or
//! [`solve`] the control problem, then evaluate dissipativity and the
//! interior-decay bounds with [`theorem_bounds`] / [`horizon_sweep`].

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod measure;
pub mod objective;
pub mod ocp;
pub mod report;
pub mod scenario;
pub mod turnpike;
mod vecops;

pub use config::{load, load_scenario, Config};
pub use dynamics::{
    drift, feedback_control, integrate, simulate_feedback, ControlGrid, ParticleState, Trajectory,
};
pub use error::{Error, Result};
pub use measure::{
    convergence_study, empirical, wasserstein1, ConvergenceReport, EmpiricalMeasure, Policy,
};
pub use objective::{dissipativity_deficit, objective, running_cost, DissipativityCurve};
pub use ocp::{gradient, optimal_value, solve, OptimalSolution, SolverConfig, Termination, WarmStart};
pub use scenario::{
    compute_static_pair, estimate_constants, invariant_radius, ControlCost, EffectiveConstants,
    Kernel, Sampler, Scenario, StateCost, StaticPair,
};
pub use turnpike::{analyze, horizon_sweep, interior_metric, theorem_bounds, TurnpikeReport};
