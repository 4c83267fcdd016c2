//! `prake`: experiment runner writing CSV tables.
//!
//! Exit codes: 0 on success, 1 on bad parameters or I/O failure, 2 when
//! `validate` finds a closed form outside its tolerance.

mod settings;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use prake_core::experiment::{self, ExperimentConfig, Table};

use settings::Overrides;

#[derive(Debug, Parser)]
#[command(name = "prake", version = experiment::VERSION, about = "Partial-Rake power-control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Target SINR against the self-interference ratio.
    GammaCurve,
    /// Average power delay profile in dB (default rho 0, 10, 20 dB).
    Apdp,
    /// mu and nu over the finger fraction on a fixed (rho, lambda) grid.
    MuNu,
    /// Probability of a user at maximum power against the frame count
    /// (default rho 0, 10, 20 dB, beta 0.1).
    PoFrames,
    /// Equilibrium utilities of one network draw, one bank per beta
    /// (default beta 1, 0.5, 0.3, 0.1).
    UtilityGain {
        /// Also estimate the prediction nmse over `--trials` draws.
        #[arg(long = "nmse-out")]
        nmse_out: Option<PathBuf>,
    },
    /// Loss against the finger fraction for rho 0, 10 dB and N_c 50, 200.
    LossBeta,
    /// Finite-sum audit of the closed forms.
    Validate,
}

impl Command {
    /// Defaults before the file and flags are applied.
    fn base_config(&self) -> ExperimentConfig {
        let base = ExperimentConfig::default();
        match self {
            Command::Apdp => ExperimentConfig {
                rho_db: vec![0.0, 10.0, 20.0],
                ..base
            },
            Command::PoFrames => ExperimentConfig {
                rho_db: vec![0.0, 10.0, 20.0],
                betas: vec![0.1],
                ..base
            },
            _ => base,
        }
    }
}

enum Failure {
    Parameter(anyhow::Error),
    Validation,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Parameter(e.into())
    }
}

fn write_table(table: &Table, config: &ExperimentConfig, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(f);
            table.write_csv(config, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            table.write_csv(config, stdout.lock())?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let flags = cli.overrides;
    let layered = match &flags.config {
        Some(path) => flags.clone().over(Overrides::from_file(path)?),
        None => flags,
    };
    let config = layered.apply(cli.command.base_config());
    config.validate()?;
    let out = layered.out.as_deref();
    let table = match &cli.command {
        Command::GammaCurve => experiment::run_gamma_curve(&config)?,
        Command::Apdp => experiment::run_apdp(&config)?,
        Command::MuNu => experiment::run_mu_nu_curves(&config)?,
        Command::PoFrames => experiment::run_po_vs_frames(&config)?,
        Command::UtilityGain { nmse_out } => {
            if let Some(path) = nmse_out {
                write_table(&experiment::run_nmse(&config)?, &config, Some(path))?;
            }
            experiment::run_utility_vs_gain(&config)?
        }
        Command::LossBeta => experiment::run_loss_vs_beta(&config)?,
        Command::Validate => {
            let (table, ok) = experiment::run_validate(&config)?;
            write_table(&table, &config, out)?;
            return if ok { Ok(()) } else { Err(Failure::Validation) };
        }
    };
    write_table(&table, &config, out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Parameter(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Validation) => {
            eprintln!("validation failed: some closed form missed its tolerance");
            ExitCode::from(2)
        }
    }
}
