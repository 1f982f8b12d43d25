//! `lan`: simulate degenerate diffusions with a noisy periodic input and run
//! likelihood, Fisher and LAN experiments from a TOML config.
//!
//! Exit status: 0 on success, 1 when an experiment or checker fails, 2 on a
//! usage or configuration error. Failures print a JSON object to stderr.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lan_diffusion::par::Execution;
use serde::Serialize;

use crate::commands::{Context, Outcome};
use crate::config::ConfigError;
use crate::output::{Format, RunDir};

const AFTER_HELP: &str = "\
Config sections and defaults:
  [model]       preset = ou (alias ou-external) | hodgkin-huxley |
                rotor (alias rotor-chain); beta, sigma (default 1);
                ou: n (1), m (n), beta and sigma as scalars or row-major matrices;
                rotor: driven = first | third | both, delta, tau, interaction, pinning
  [signal]      preset = sine | fourier | custom (sine); harmonics (1);
                custom: dim and [[signal.harmonic]] tables with k, sin, cos,
                sin_offset, cos_offset
  [parameter]   theta, period (required)
  [experiment]  horizon (10), step (1e-3), replications (200), n (100),
                n_list ([50, 100, 200]), h (all ones), fisher = oracle | ergodic,
                fisher_horizon (1000 periods),
                alt_theta, alt_period, start_x, start_y, start_z, input,
                half_width, spacing
Any key can be replaced with --set section.key=value.";

#[derive(Debug, Parser)]
#[command(name = "lan", version, about, after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed; replications derive their own seeds from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Parent of the run directories.
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,

    /// Worker threads (default: available cores); 1 runs sequentially.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Trajectory output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Override a config value, `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Simulate the full system (X, Y, Z).
    Simulate,
    /// Recover Y and Z from the X columns of `experiment.input`.
    Reconstruct,
    /// Log-likelihood ratio of an alternative against `[parameter]`.
    Loglik,
    /// Fisher information, its derivative and the invertibility verdicts.
    Fisher,
    /// One LAN decomposition on a single path.
    Lan,
    /// Monte Carlo law of the score.
    ScoreCov,
    /// Decay of the LAN remainder over `experiment.n_list`.
    Remainder,
    /// Joint maximum likelihood for (theta, T).
    Mle,
    /// Estimation error rates over `experiment.n_list`.
    Rates,
    /// Run every assumption checker and print a verdict table.
    Check,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: u8,
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    let report = ErrorReport {
        error: kind,
        message,
        exit_code: code,
    };
    eprintln!(
        "{}",
        serde_json::to_string(&report).expect("error report serializes")
    );
    ExitCode::from(code)
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError("--config is required".into()))?;
    let resolved = config::load(path, &cli.overrides)?;
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(ConfigError("--workers must be at least 1".into()).into());
    }
    let exec = if workers == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    if exec == Execution::Parallel {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()?;
    }
    log::info!("{} worker(s)", workers);
    let run = RunDir::create(&cli.out_dir, &resolved.text, cli.seed)?;
    let ctx = Context {
        resolved,
        seed: cli.seed,
        exec,
        format: cli.format,
        run,
    };
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Reconstruct => commands::reconstruct(&ctx),
        Command::Loglik => commands::loglik(&ctx),
        Command::Fisher => commands::fisher(&ctx),
        Command::Lan => commands::lan_single(&ctx),
        Command::ScoreCov => commands::score_cov(&ctx),
        Command::Remainder => commands::remainder(&ctx),
        Command::Mle => commands::mle(&ctx),
        Command::Rates => commands::rates(&ctx),
        Command::Check => commands::check(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim().to_string(), 2),
    };
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail(msg)) => fail("check", msg, 1),
        Err(e) if e.downcast_ref::<ConfigError>().is_some() => fail("usage", format!("{e:#}"), 2),
        Err(e) => fail("experiment", format!("{e:#}"), 1),
    }
}
