//! `ahres`: command-line driver for flows, kernels, residual checks,
//! invariant suites and parameter sweeps.
//!
//! Exit status: 0 on success, 1 when `check` finds a failing invariant, 2 on
//! configuration errors and 3 when a numerical module reports an error.

mod checks;
mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::{Command, Outcome};
use config::{FamilyName, RepName, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ahres", version, about = "Resolvent numerics on asymptotically hyperbolic manifolds")]
struct Cli {
    /// Command to run.
    #[arg(value_enum)]
    command: Option<Command>,
    /// TOML configuration file; defaults apply to every missing key.
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
    /// Write output here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed for multistart shooting.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Multiplies the upper thresholds of `check`.
    #[arg(long)]
    tolerance_scale: Option<f64>,
    /// Metric family.
    #[arg(long, value_enum)]
    family: Option<FamilyName>,
    /// Boundary dimension.
    #[arg(long)]
    n: Option<usize>,
    /// Perturbation strength.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Semiclassical parameters (comma separated) for kernel, wkb, residual and sweep.
    #[arg(long, value_delimiter = ',')]
    h: Option<Vec<f64>>,
    /// Distances (comma separated) for kernel and sweep.
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<f64>>,
    /// Kernel representation.
    #[arg(long, value_enum)]
    rep: Option<RepName>,
}

impl Cli {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                RunConfig::from_toml(&text).map_err(CliError::Config)?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.tolerance_scale {
            if v.is_nan() || v <= 0.0 {
                return Err(CliError::Config("tolerance scale must be positive".into()));
            }
            cfg.tolerance_scale = v;
        }
        if let Some(v) = self.family {
            cfg.model.family = v;
        }
        if let Some(v) = self.n {
            cfg.model.n = v;
        }
        if let Some(v) = self.epsilon {
            cfg.model.epsilon = v;
        }
        if let Some(v) = &self.h {
            cfg.kernel.h = v.clone();
            cfg.wkb.h = v.clone();
            cfg.residual.h = v.clone();
            cfg.sweep.h = v.clone();
        }
        if let Some(v) = &self.r {
            cfg.kernel.r = v.clone();
            cfg.sweep.r = v.clone();
        }
        if let Some(v) = self.rep {
            cfg.kernel.rep = v;
        }
        Ok(cfg.resolve())
    }
}

fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = cli.load()?;
    if cli.print_config {
        return Ok(Outcome { text: cfg.to_toml(), ..Outcome::default() });
    }
    let command = cli.command.ok_or_else(|| CliError::Config("no command given (see --help)".into()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| commands::run(command, &cfg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match execute(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let written = match &cli.output {
        Some(path) => std::fs::write(path, &outcome.text),
        None => std::io::stdout().write_all(outcome.text.as_bytes()),
    };
    if let Err(e) = written {
        let e = CliError::from(e);
        eprintln!("{e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    if let Some(s) = &outcome.summary {
        eprintln!("{s}");
    }
    ExitCode::from(if outcome.failed { 1 } else { 0 })
}
