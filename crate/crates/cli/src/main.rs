use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use emerge_cli::report::write_outputs;
use emerge_cli::scenario::Scenario;
use emerge_cli::{run_bytes, schedule_bytes, CliError, Outcome, RunOptions};

#[derive(Parser)]
#[command(name = "emerge", version, about = "Validity, domination and simulation reports for e-value merging functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// LP verdict tolerance (default 1e-6).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    reps: Option<u64>,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            tol: self.tol,
            reps: self.reps,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run(Common),
    /// Run a dominate scenario over an (epsilon, theta) ladder.
    Schedule {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        epsilons: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        thetas: Vec<f64>,
        /// Maximum number of cells run at once.
        #[arg(long, env = "EMERGE_THREADS")]
        threads: Option<usize>,
    },
    /// Compare the LP with the brute-force oracle on an oracle-check scenario.
    OracleCheck(Common),
}

fn execute(cli: &Cli) -> anyhow::Result<Result<Outcome, CliError>> {
    let (common, outcome) = match &cli.command {
        Command::Run(c) => {
            let bytes = std::fs::read(&c.scenario)
                .with_context(|| format!("reading {}", c.scenario.display()))?;
            (c, run_bytes(&bytes, &c.options()))
        }
        Command::OracleCheck(c) => {
            let bytes = std::fs::read(&c.scenario)
                .with_context(|| format!("reading {}", c.scenario.display()))?;
            let outcome = match emerge_cli::run::parse_scenario(&bytes) {
                Ok(Scenario::OracleCheck { .. }) => run_bytes(&bytes, &c.options()),
                Ok(_) => Err(CliError::input("kind", "oracle-check needs an oracle-check scenario")),
                Err(e) => Err(e),
            };
            (c, outcome)
        }
        Command::Schedule {
            common,
            epsilons,
            thetas,
            threads,
        } => {
            let bytes = std::fs::read(&common.scenario)
                .with_context(|| format!("reading {}", common.scenario.display()))?;
            let outcome = schedule_bytes(&bytes, epsilons, thetas, *threads, &common.options());
            (common, outcome)
        }
    };
    if let Ok(o) = &outcome {
        write_outputs(&common.out, &o.report, o.table.as_ref())
            .with_context(|| format!("writing reports to {}", common.out.display()))?;
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Ok(outcome)) => ExitCode::from(outcome.exit_code() as u8),
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
