use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use filtralab::config::{PartialConfig, ScenarioConfig, ScenarioKind, SEED_ENV};
use filtralab::report::{emit_report, Format};
use filtralab::scenario;
use filtralab::Result;

/// Monte Carlo checks of drift formulas under enlarged filtrations.
#[derive(Parser)]
#[command(name = "filtralab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report.
    Run(RunArgs),
    /// List the available scenarios.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario name; may also be given with `--scenario` or in the config file.
    #[arg(value_name = "SCENARIO")]
    positional: Option<ScenarioKind>,
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    n_paths: Option<usize>,
    /// Falls back to the FILTRALAB_SEED environment variable.
    #[arg(long)]
    seed: Option<u64>,
    /// Trim around singular times.
    #[arg(long)]
    delta: Option<f64>,
    /// Nominal z threshold before the Bonferroni adjustment.
    #[arg(long)]
    threshold: Option<f64>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
    /// Skip the drift correction (negative control, expected to fail).
    #[arg(long)]
    no_correction: bool,
    /// `key = value` or JSON config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn layers(self) -> Result<PartialConfig> {
        let file = match &self.config {
            Some(path) => PartialConfig::from_file(path)?,
            None => PartialConfig::default(),
        };
        let flags = PartialConfig {
            scenario: self.scenario.or(self.positional),
            horizon: self.horizon,
            dt: self.dt,
            n_paths: self.n_paths,
            seed: self.seed,
            delta: self.delta,
            threshold: self.threshold,
            out_path: self.out,
            format: self.format,
            no_correction: self.no_correction.then_some(true),
        };
        Ok(file.overlay(flags))
    }
}

fn run(args: RunArgs) -> Result<bool> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let cfg = ScenarioConfig::resolve(args.layers()?, env_seed.as_deref())?;
    let outcome = scenario::run(&cfg)?;
    emit_report(&outcome.report, cfg.format, cfg.out_path.as_deref())?;
    eprintln!("{}", outcome.summary);
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for kind in ScenarioKind::ALL {
                println!("{kind}");
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => match run(args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
