//! Command-line front end. Every subcommand reads one config file, calls the
//! library, and writes its outputs (stdout when no path is given) plus a
//! `<first output>.manifest.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{self, Config};
use crate::dynamics::{integrate, simulate_feedback, ControlGrid};
use crate::error::{Error, Result};
use crate::measure::{convergence_study, Policy};
use crate::objective::{dissipativity_deficit, objective, CostBreakdown};
use crate::ocp::{solve, Termination};
use crate::report::{
    config_digest, emit_report, manifest_path, to_json, trajectory_csv, write_text, Emit, Format,
    RunManifest, SumOfSquaresCurve,
};
use crate::scenario::{
    compute_static_pair, estimate_constants, invariant_radius, EffectiveConstants, InitialSpec,
    StaticPair,
};
use crate::turnpike::{analyze, horizon_sweep};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mft", version, about = "Particle consensus control and turnpike diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario config (TOML)
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Feedback,
    Solved,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Feedback => Policy::Feedback,
            PolicyArg::Solved => Policy::Solved,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Form {
    /// `(1/N)(|dx|_N + |du|_N)^2`
    SquaredSum,
    /// `(1/N)(|dx|_N^2 + |du|_N^2)`
    Sos,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the uncontrolled system (zero controls) and write the trajectory CSV
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_traj: Option<PathBuf>,
    },
    /// Run the stabilizing feedback law and check the cheap-control certificate
    Feedback {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_traj: Option<PathBuf>,
        #[arg(long)]
        out_report: Option<PathBuf>,
    },
    /// Solve the optimal control problem
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_traj: Option<PathBuf>,
        #[arg(long)]
        out_report: Option<PathBuf>,
        /// Treat a solver that did not converge as a numerical failure
        #[arg(long)]
        strict: bool,
    },
    /// Effective constants on the invariant ball (JSON)
    Constants {
        #[command(flatten)]
        common: Common,
        /// Ball radius; defaults to the invariant radius
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cumulative dissipativity integrals and their deficit (CSV)
    Dissipativity {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "solved")]
        policy: PolicyArg,
        #[arg(long, value_enum, default_value = "squared-sum")]
        form: Form,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
    },
    /// Interior-decay bounds for the solved problem (JSON)
    Turnpike {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
    },
    /// Turnpike bounds across right endpoints b (CSV, optional JSON)
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated right endpoints; defaults to [turnpike].sweep
        #[arg(long, value_delimiter = ',')]
        b: Vec<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        out_report: Option<PathBuf>,
    },
    /// Empirical-measure convergence in the particle count (CSV, optional JSON)
    Meanfield {
        #[command(flatten)]
        common: Common,
        /// Ascending particle counts, each dividing the last
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, value_enum, default_value = "feedback")]
        policy: PolicyArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        out_report: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Feedback { .. } => "feedback",
            Command::Solve { .. } => "solve",
            Command::Constants { .. } => "constants",
            Command::Dissipativity { .. } => "dissipativity",
            Command::Turnpike { .. } => "turnpike",
            Command::Sweep { .. } => "sweep",
            Command::Meanfield { .. } => "meanfield",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Feedback { common, .. }
            | Command::Solve { common, .. }
            | Command::Constants { common, .. }
            | Command::Dissipativity { common, .. }
            | Command::Turnpike { common, .. }
            | Command::Sweep { common, .. }
            | Command::Meanfield { common, .. } => common,
        }
    }
}

#[derive(Debug, Serialize)]
struct FeedbackReport {
    static_pair: StaticPair,
    constants: EffectiveConstants,
    cost: CostBreakdownSummary,
    /// `C0 (1/N) sum_k |psi0_k - psi_sigma|`
    certificate_bound: f64,
    certificate_holds: bool,
}

#[derive(Debug, Serialize)]
struct CostBreakdownSummary {
    total: f64,
    state_part: f64,
    control_part: f64,
}

impl From<&CostBreakdown> for CostBreakdownSummary {
    fn from(c: &CostBreakdown) -> Self {
        Self {
            total: c.total,
            state_part: c.state_part,
            control_part: c.control_part,
        }
    }
}

#[derive(Debug, Serialize)]
struct SolveReport {
    #[serde(rename = "V")]
    value: f64,
    initial_value: f64,
    iterations: usize,
    gradient_norm: f64,
    termination: String,
}

/// Collects outputs: each goes to its path or, without one, to stdout.
struct Outputs {
    written: Vec<PathBuf>,
}

impl Outputs {
    fn put(&mut self, path: Option<&Path>, text: &str) -> Result<()> {
        match path {
            Some(p) => {
                write_text(p, text)?;
                self.written.push(p.to_path_buf());
            }
            None => print!("{text}"),
        }
        Ok(())
    }
}

fn strict_check(strict: bool, termination: Termination) -> Result<()> {
    if strict && termination != Termination::Converged {
        return Err(Error::Solver(termination.to_string()));
    }
    Ok(())
}

fn run(cmd: &Command, cfg: &Config, out: &mut Outputs) -> Result<()> {
    let s = &cfg.scenario;
    match cmd {
        Command::Simulate { out_traj, .. } => {
            let traj = integrate(&s.initial_state(), &ControlGrid::zeros(s), s)?;
            out.put(out_traj.as_deref(), &trajectory_csv(&traj))
        }
        Command::Feedback {
            out_traj,
            out_report,
            ..
        } => {
            let pair = compute_static_pair(s)?;
            let consts = estimate_constants(s, &pair, invariant_radius(s, &pair))?;
            let (traj, u) = simulate_feedback(&s.initial_state(), &pair, s)?;
            let cost = objective(&traj, &u, s)?;
            let mean_dist = s
                .initial_states
                .chunks(s.dim)
                .map(|p| crate::vecops::dist(p, &pair.psi_sigma))
                .sum::<f64>()
                / s.particles as f64;
            let bound = consts.C0 * mean_dist;
            let report = FeedbackReport {
                static_pair: pair,
                constants: consts,
                cost: (&cost).into(),
                certificate_bound: bound,
                certificate_holds: cost.total <= bound,
            };
            out.put(out_traj.as_deref(), &trajectory_csv(&traj))?;
            out.put(out_report.as_deref(), &to_json(&report)?)
        }
        Command::Solve {
            out_traj,
            out_report,
            strict,
            ..
        } => {
            let sol = solve(s, &cfg.solver)?;
            let report = SolveReport {
                value: sol.value,
                initial_value: sol.initial_value,
                iterations: sol.iterations,
                gradient_norm: sol.gradient_norm,
                termination: sol.termination.to_string(),
            };
            out.put(out_traj.as_deref(), &trajectory_csv(&sol.trajectory))?;
            out.put(out_report.as_deref(), &to_json(&report)?)?;
            strict_check(*strict, sol.termination)
        }
        Command::Constants { radius, out: path, .. } => {
            let pair = compute_static_pair(s)?;
            let r = radius
                .or(s.turnpike.radius)
                .unwrap_or_else(|| invariant_radius(s, &pair));
            let consts = estimate_constants(s, &pair, r)?;
            out.put(path.as_deref(), &to_json(&consts)?)
        }
        Command::Dissipativity {
            policy,
            form,
            out: path,
            strict,
            ..
        } => {
            let pair = compute_static_pair(s)?;
            let (traj, u) = match Policy::from(*policy) {
                Policy::Feedback => simulate_feedback(&s.initial_state(), &pair, s)?,
                Policy::Solved => {
                    let sol = solve(s, &cfg.solver)?;
                    strict_check(*strict, sol.termination)?;
                    (sol.trajectory, sol.controls)
                }
            };
            let curve = dissipativity_deficit(&traj, &u, &pair, s)?;
            let text = match form {
                Form::SquaredSum => curve.render(Format::Csv)?,
                Form::Sos => SumOfSquaresCurve(&curve).render(Format::Csv)?,
            };
            out.put(path.as_deref(), &text)
        }
        Command::Turnpike {
            lambda,
            alpha,
            out: path,
            strict,
            ..
        } => {
            let mut s = s.clone();
            s.turnpike.lambda = lambda.unwrap_or(s.turnpike.lambda);
            s.turnpike.alpha = alpha.unwrap_or(s.turnpike.alpha);
            let (report, sol) = analyze(&s, &cfg.solver)?;
            out.put(path.as_deref(), &to_json(&report)?)?;
            strict_check(*strict, sol.termination)
        }
        Command::Sweep {
            b,
            lambda,
            alpha,
            out: path,
            out_report,
            ..
        } => {
            let b_list = if b.is_empty() { &s.turnpike.sweep } else { b };
            if b_list.is_empty() {
                return Err(Error::Invalid(
                    "no horizons: pass --b or set [turnpike].sweep".into(),
                ));
            }
            let report = horizon_sweep(
                s,
                b_list,
                lambda.unwrap_or(s.turnpike.lambda),
                alpha.unwrap_or(s.turnpike.alpha),
                &cfg.solver,
            )?;
            out.put(path.as_deref(), &report.render(Format::Csv)?)?;
            if let Some(p) = out_report {
                emit_report(&report, Format::Json, p)?;
                out.written.push(p.clone());
            }
            Ok(())
        }
        Command::Meanfield {
            n,
            seeds,
            policy,
            out: path,
            out_report,
            ..
        } => {
            let report = convergence_study(s, n, (*policy).into(), seeds, &cfg.solver)?;
            out.put(path.as_deref(), &report.render(Format::Csv)?)?;
            if let Some(p) = out_report {
                emit_report(&report, Format::Json, p)?;
                out.written.push(p.clone());
            }
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("MFT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Invalid(format!("MFT_THREADS must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))
}

/// Parses `argv` (program name first), runs the subcommand, returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let start = Instant::now();
    let cmd = &cli.command;
    let path = &cmd.common().config;

    let result = (|| -> Result<Vec<PathBuf>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Error::Parse(format!("{} is not valid UTF-8", path.display())))?;
        let cfg = config::load(&text)?;
        let mut out = Outputs { written: vec![] };
        let run_result = thread_pool()?.install(|| run(cmd, &cfg, &mut out));
        if let Some(first) = out.written.first() {
            let manifest = RunManifest {
                subcommand: cmd.name().into(),
                config_digest: config_digest(&bytes),
                seed: match &cfg.scenario.initial {
                    InitialSpec::Sampled { seed, .. } => Some(*seed),
                    InitialSpec::Explicit(_) => None,
                },
                tool_version: env!("CARGO_PKG_VERSION").into(),
                wall_clock_seconds: start.elapsed().as_secs_f64(),
                outputs: out.written.clone(),
            };
            write_text(&manifest_path(first), &to_json(&manifest)?)?;
        }
        run_result.map(|_| out.written)
    })();

    match result {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("mft {}: {e}", cmd.name());
            exit_code(&e)
        }
    }
}
