//! `decoy`: verify upper bounds on the tagged-pulse fraction of decoy-state
//! QKD runs.
//!
//! Exit status: 0 success, 1 I/O failure, 2 configuration or input error,
//! 3 vacuous bound, 4 solver did not converge, 5 weak-decoy setup
//! impractical.

// `!(x > 0.0)` style checks deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod render;
mod table1;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Outcome, SweepGrid};
use config::{FeasibilityOverrides, Grid, Loaded, Overrides};
use render::{Format, Report};

#[derive(Debug, Parser)]
#[command(
    name = "decoy",
    version,
    about = "Decoy-state bounds on the tagged-pulse fraction"
)]
struct Cli {
    /// TOML run configuration; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bounds for one intensity pair from a channel model or measured rates.
    Bound(Overrides),
    /// Sample click counts and bound the sampled rates.
    Simulate(Overrides),
    /// Reproduce the reference table with fixed parameters.
    Table1,
    /// Finite-size bounds over a (mu, mu') grid.
    Sweep(SweepArgs),
    /// Pulses needed by the vacuum + very weak decoy approach.
    Feasibility(FeasibilityOverrides),
}

#[derive(Debug, clap::Args)]
struct SweepArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// `start:stop:step` or a comma list.
    #[arg(long)]
    mu_grid: Option<Grid>,
    #[arg(long)]
    mu_prime_grid: Option<Grid>,
    #[arg(long)]
    eta_grid: Option<Grid>,
}

fn run(cli: &Cli) -> Result<(String, Outcome), CliError> {
    let mut loaded = Loaded::read(cli.config.as_deref())?;
    let fmt = cli.format;
    let rendered = |r: &dyn ReportDyn| r.render_dyn(fmt).map_err(CliError::Io);
    match &cli.command {
        Command::Bound(o) => {
            loaded.apply(o);
            let (out, outcome) = commands::bound(&loaded.run_config()?)?;
            Ok((rendered(&out)?, outcome))
        }
        Command::Simulate(o) => {
            loaded.apply(o);
            let seed = loaded.seed(cli.seed)?;
            let (out, outcome) = commands::simulate(&loaded.run_config()?, seed)?;
            Ok((rendered(&out)?, outcome))
        }
        Command::Table1 => Ok((rendered(&table1::compute()?)?, Outcome::Ok)),
        Command::Sweep(a) => {
            loaded.apply(&a.overrides);
            loaded.set_grid("mu", a.mu_grid.clone());
            loaded.set_grid("mu_prime", a.mu_prime_grid.clone());
            loaded.set_grid("eta", a.eta_grid.clone());
            let protocol = loaded.file.protocol.clone().unwrap_or_default();
            let axis = |key: &str, fallback: Option<f64>| -> Result<Vec<f64>, CliError> {
                match (loaded.grid(key)?, fallback) {
                    (Some(v), _) => Ok(v),
                    (None, Some(x)) => Ok(vec![x]),
                    (None, None) => Err(CliError::Config(format!(
                        "sweep needs [sweep] {key} or --{}-grid",
                        key.replace('_', "-")
                    ))),
                }
            };
            let grid = SweepGrid {
                mu: axis("mu", protocol.mu)?,
                mu_prime: axis("mu_prime", protocol.mu_prime)?,
                eta: loaded.grid("eta")?,
            };
            let out = commands::sweep(
                &loaded.scenario()?,
                &grid,
                loaded.budget()?.as_ref(),
                &loaded.settings()?,
                loaded.qber()?,
                loaded.solver()?,
            )?;
            for s in &out.skipped {
                eprintln!("note: skipped {s}");
            }
            Ok((rendered(&out)?, Outcome::Ok))
        }
        Command::Feasibility(o) => {
            loaded.apply_feasibility(o);
            let (setup, target) = loaded.feasibility()?;
            let (out, outcome) = commands::feasibility(&setup, target)?;
            Ok((rendered(&out)?, outcome))
        }
    }
}

/// Object-safe face of [`Report`].
trait ReportDyn {
    fn render_dyn(&self, format: Format) -> Result<String, String>;
}

impl<T: Report> ReportDyn for T {
    fn render_dyn(&self, format: Format) -> Result<String, String> {
        self.render(format)
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|(text, outcome)| {
        emit(&text, cli.out.as_ref())?;
        Ok(outcome)
    });
    match result {
        Ok(outcome) => {
            match outcome {
                Outcome::Vacuous => eprintln!("bound is vacuous"),
                Outcome::Impractical => eprintln!("weak-decoy setup is impractical"),
                Outcome::Ok => {}
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
