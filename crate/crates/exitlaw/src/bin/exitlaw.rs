//! Scenario front end: exact solves, simulation pipelines, quasi-stationary
//! analysis, ray laws, and the full verification suite.

use clap::{Args, Parser, Subcommand};
use exitlaw::acceptance::run_suite;
use exitlaw::config::{preset, resolve, Scenario, ScenarioConfig, PRESET_NAMES};
use exitlaw::output::emit_outputs;
use exitlaw::scenario::{run_exact, run_qsd_scenario, run_ray, run_scenario, Report};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "exitlaw",
    about = "Killed Markov processes: exit-location laws, resurrected processes, exact cross-checks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Embedded preset name.
    #[arg(long, value_parser = PRESET_NAMES)]
    preset: Option<String>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for tables, summary, and figure.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ScenarioArgs {
    fn scenario(&self) -> exitlaw::Result<Scenario> {
        let mut config: ScenarioConfig = match (&self.config, &self.preset) {
            (Some(path), None) => ScenarioConfig::from_path(path)?,
            (None, Some(name)) => preset(name)?,
            _ => {
                return Err(exitlaw::Error::Config(
                    "give exactly one of --config PATH or --preset NAME".into(),
                ))
            }
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        resolve(&config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exact generator-matrix pipeline only (ctmc models).
    Exact(ScenarioArgs),
    /// Full pipeline: exact solve, killed trajectories, resurrected cycles,
    /// and all pairwise comparisons.
    Simulate(ScenarioArgs),
    /// Quasi-stationary analysis: eigenpair, exponential lifetime,
    /// independence, mixture decomposition, fixed point.
    Qsd(ScenarioArgs),
    /// Ray pipeline: inversion and thinning exits against closed-form laws.
    Ray(ScenarioArgs),
    /// Run the full verification suite and print one line per criterion.
    Check {
        /// Master seed for the suite.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Directory for the per-preset tables, summaries, and figures.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn finish(report: &Report, args: &ScenarioArgs) -> exitlaw::Result<bool> {
    print!("{}", exitlaw::output::summary_text(report));
    if let Some(dir) = &args.out {
        let paths = emit_outputs(report, dir)?;
        for p in paths {
            println!("wrote {}", p.display());
        }
    }
    Ok(report.all_pass())
}

fn run() -> exitlaw::Result<bool> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Exact(args) => finish(&run_exact(&args.scenario()?)?, args),
        Command::Simulate(args) => finish(&run_scenario(&args.scenario()?)?, args),
        Command::Qsd(args) => finish(&run_qsd_scenario(&args.scenario()?)?, args),
        Command::Ray(args) => finish(&run_ray(&args.scenario()?)?, args),
        Command::Check { seed, out } => {
            let results = run_suite(*seed, out.as_deref())?;
            for r in &results {
                println!("{}", r.line());
            }
            let pass = results.iter().all(|r| r.pass);
            println!("overall: {}", if pass { "PASS" } else { "FAIL" });
            Ok(pass)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
