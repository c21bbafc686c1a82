//! `slips` experiment runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slips::experiment::{cmd_compare, cmd_sample, cmd_verify, CommandOutput, ExperimentConfig, Overrides};
use slips::{DenoiserMode, GridKind, Result};

#[derive(Parser, Debug)]
#[command(name = "slips", version, about = "Stochastic-localization sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a batch of independent SLIPS trajectories and write samples and metrics.
    Sample(Common),
    /// Run numerical checks and write their reports.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Checks to run; the config's list, or the whole suite, when omitted.
        #[arg(value_name = "CHECK")]
        checks: Vec<String>,
    },
    /// Compare log-SNR and uniform grids.
    Compare(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML, or a manifest.json from an earlier run).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR", env = "SLIPS_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["log-snr", "uniform"])]
    grid: Option<String>,
    #[arg(long, value_parser = ["mala", "oracle"])]
    denoiser: Option<String>,
    /// Also write the per-step trace.
    #[arg(long)]
    trace: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        let overrides = Overrides {
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
            grid: self.grid.as_deref().map(str::parse::<GridKind>).transpose()?,
            denoiser: self.denoiser.as_deref().map(str::parse::<DenoiserMode>).transpose()?,
            trace: self.trace,
        };
        overrides.apply(&mut cfg);
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<CommandOutput> {
    match cli.command {
        Command::Sample(c) => cmd_sample(&c.load()?),
        Command::Verify { common, checks } => cmd_verify(&common.load()?, &checks),
        Command::Compare(c) => cmd_compare(&c.load()?),
    }
}

fn main() -> ExitCode {
    // Usage errors exit 1 like config errors; 2 is reserved for failed checks.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) => {
            for r in &out.reports {
                println!("{} {} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.notes);
            }
            println!("wrote {} files to {}", out.files.len(), out.directory.display());
            ExitCode::from(out.outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
