//! `pos-sde`: benchmark CLI for parallel optimized sampling of stochastic
//! differential equations.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numeric
//! failures during a run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pos_sde::config::{PartialConfig, RunConfig, Scenario};
use pos_sde::{csv, scenarios, summary};

#[derive(Parser, Debug)]
#[command(
    name = "pos-sde",
    about = "Variance-reduced stochastic differential equation benchmarks \
             (parallel optimized sampling)",
    after_help = "SCENARIOS: static, onestep-combined, onestep-individual, sde-ou, \
                  sde-cubic, sde-irregular, sde-laser, plan, summary"
)]
struct Cli {
    /// Scenario to run (or `summary` to summarize an existing CSV).
    scenario: String,

    /// JSON config file with flat keys; CLI flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Existing CSV to summarize (scenario `summary` only).
    #[arg(long = "in")]
    input: Option<PathBuf>,

    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    attempts: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    /// Number of optimized moments M.
    #[arg(long)]
    m_order: Option<usize>,
    /// Stepping method: euler | combined | individual.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path (default `<scenario>.csv`).
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    drift: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    init_mean: Option<f64>,
    #[arg(long)]
    init_std: Option<f64>,
    #[arg(long)]
    ou_f: Option<f64>,
    #[arg(long)]
    ou_g: Option<f64>,
    #[arg(long)]
    ou_b: Option<f64>,
    /// Laser noise amplitudes to sweep (repeat the flag).
    #[arg(long = "laser-b")]
    laser_b: Option<Vec<f64>>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Record wall-clock timings (makes the CSV machine-dependent).
    #[arg(long)]
    timing: bool,
    /// Normalization for exp/abs errors: divide | multiply.
    #[arg(long)]
    extra_error_scaling: Option<String>,
    /// Total budget N = N_S * N_T (plan scenario).
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    order_p: Option<f64>,
    #[arg(long)]
    trunc_const: Option<f64>,
    #[arg(long)]
    sample_sigma: Option<f64>,
}

impl Cli {
    fn as_partial(&self) -> PartialConfig {
        PartialConfig {
            scenario: Some(self.scenario.clone()),
            n_samples: self.n_samples,
            n_steps: self.n_steps,
            dt: self.dt,
            horizon: self.horizon,
            attempts: self.attempts,
            runs: self.runs,
            m_order: self.m_order,
            method: self.method.clone(),
            seed: self.seed,
            out: self.out.clone(),
            sigma: self.sigma,
            drift: self.drift,
            noise: self.noise,
            init_mean: self.init_mean,
            init_std: self.init_std,
            ou_f: self.ou_f,
            ou_g: self.ou_g,
            ou_b: self.ou_b,
            laser_b: self.laser_b.clone(),
            workers: self.workers,
            timing: if self.timing { Some(true) } else { None },
            extra_error_scaling: self.extra_error_scaling.clone(),
            budget: self.budget,
            order_p: self.order_p,
            trunc_const: self.trunc_const,
            sample_sigma: self.sample_sigma,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if cli.scenario == "summary" {
        return run_summary(&cli);
    }

    let mut partial = match &cli.config {
        Some(path) => match PartialConfig::from_file(path) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(2);
            }
        },
        None => PartialConfig::default(),
    };
    partial = partial.merged_with(cli.as_partial());
    let cfg = match RunConfig::resolve(&partial) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };

    let body = match pos_sde::execute(&cfg) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::from(3);
        }
    };
    if let Err(e) = csv::write_file(&cfg.out, &body) {
        eprintln!("cannot write {}: {e}", cfg.out.display());
        return ExitCode::from(3);
    }
    eprintln!("wrote {}", cfg.out.display());

    if cfg.scenario == Scenario::Plan {
        match scenarios::plan::run(&cfg) {
            Ok(plan) => print!("{}", scenarios::plan::describe(&plan)),
            Err(e) => {
                eprintln!("plan failed: {e}");
                return ExitCode::from(3);
            }
        }
    } else {
        match csv::parse(&body).map_err(anyhow::Error::msg).and_then(|rows| {
            summary::summarize(&rows).map_err(anyhow::Error::msg)
        }) {
            Ok(text) => print!("{text}"),
            Err(e) => {
                eprintln!("summary failed: {e}");
                return ExitCode::from(3);
            }
        }
    }
    ExitCode::SUCCESS
}

fn run_summary(cli: &Cli) -> ExitCode {
    let Some(path) = &cli.input else {
        eprintln!("config error: summary requires --in <file.csv>");
        return ExitCode::from(2);
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    match csv::parse(&text).and_then(|rows| summary::summarize(&rows)) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("summary failed: {e}");
            ExitCode::from(3)
        }
    }
}
