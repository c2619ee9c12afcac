//! `ergodic`: solve, evaluate, simulate and verify ergodic control problems.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(
    name = "ergodic",
    version,
    about = "Ergodic control of 1D diffusions by Howard iteration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Problem configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory for reports and tables; created if missing.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 2000.0)]
    horizon: f64,
    #[arg(long, default_value_t = 100.0)]
    burn_in: f64,
    #[arg(long, default_value_t = 4)]
    paths: usize,
    /// Starting point (domain centre by default).
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    /// Reference average cost replacing the quadrature value.
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Write trace.csv for path 0, one row every N steps.
    #[arg(long)]
    trace_every: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run Howard iteration to convergence.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a fixed strategy: density, average cost, bias function.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Strategy as an expression in x or a CSV file with columns x,u.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Cross-check the quadrature average cost by Monte Carlo.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: Option<String>,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Check a value function and average cost against the Bellman equation.
    Verify {
        #[command(flatten)]
        common: Common,
        /// CSV with columns x,v,dv,d2v.
        #[arg(long)]
        value: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        rho: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Evaluate { .. } => "evaluate",
            Command::Simulate { .. } => "simulate",
            Command::Verify { .. } => "verify",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Solve { common }
            | Command::Evaluate { common, .. }
            | Command::Simulate { common, .. }
            | Command::Verify { common, .. } => common,
        }
    }
}

/// `--out-dir` as written on the command line, for manifests of usage errors.
fn raw_out_dir(args: &[String]) -> PathBuf {
    args.iter()
        .position(|a| a == "--out-dir")
        .and_then(|i| args.get(i + 1).cloned())
        .or_else(|| {
            args.iter()
                .find_map(|a| a.strip_prefix("--out-dir=").map(str::to_owned))
        })
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().collect();
    let started = Instant::now();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let mut m = Manifest::new("usage", None, raw_out_dir(&args));
            m.finish(1, Some(e.kind().to_string()), started);
            return ExitCode::from(1);
        }
    };
    let common = cli.command.common();
    let mut m = Manifest::new(
        cli.command.name(),
        Some(&common.config),
        common.out_dir.clone(),
    );
    let outcome = commands::run(&cli.command, &mut m);
    let (code, error) = match outcome {
        Ok(code) => (code, None),
        Err(e) => {
            eprintln!("error: {e}");
            (1, Some(e.to_string()))
        }
    };
    m.finish(code, error, started);
    ExitCode::from(code)
}
