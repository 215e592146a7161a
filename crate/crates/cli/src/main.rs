use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ets_core::scenario::SweepParam;
use ets_sim::run::{load_scenario, Overrides};
use ets_sim::verify::{Check, VerifyConfig};
use ets_sim::{load_json, replay, run, verify, with_threads, CliError};

#[derive(Parser)]
#[command(name = "ets-sim", version, about = "Emission-permit auction and resale market simulator")]
struct Cli {
    /// Directory for result files (overrides the config).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Root seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 or unset uses all cores.
    #[arg(long, global = true, env = "ETS_SIM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay the four-bidder worked example and compare with the published figures.
    ReplayExample,
    /// Run a scenario and write rounds.csv, trades.csv and summary.json.
    Run { config: PathBuf },
    /// Run oracle checks and write witnesses.json.
    Verify {
        config: PathBuf,
        /// Comma-separated subset of prop1, prop2, prop3, prop4, remark.
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
    },
    /// Run a scenario once per parameter value and write sweep.csv.
    Sweep {
        config: PathBuf,
        /// One of beta, extra_shade, speculator_bid, k, banking_cap.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides { seed: cli.seed, output_dir: cli.output_dir.clone() };
    match cli.command {
        Command::ReplayExample => {
            let report = replay::replay()?;
            print!("{}", replay::render(&report));
            if !report.mismatches.is_empty() {
                return Err(CliError::GoldenMismatch(report.mismatches));
            }
            println!("all values match");
            Ok(())
        }
        Command::Run { config } => {
            let cfg = load_scenario(&config, &overrides)?;
            let report = with_threads(cli.threads, || run::run(&cfg))??;
            let s = &report.summary;
            println!(
                "{} rows written to {}; mean price {}, mean revenue {}, mean efficiency {}",
                s.rows, cfg.output.dir, s.clearing_price.mean, s.revenue.mean, s.efficiency_ratio.mean
            );
            Ok(())
        }
        Command::Verify { config, checks } => {
            let mut cfg: VerifyConfig = load_json(&config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let checks = match checks {
                Some(names) => {
                    names.iter().map(|n| n.parse::<Check>()).collect::<Result<Vec<_>, _>>().map_err(CliError::Config)?
                }
                None => Check::ALL.to_vec(),
            };
            let report = with_threads(cli.threads, || verify::verify(&cfg, &checks))??;
            let dir = cli.output_dir.unwrap_or_else(|| PathBuf::from("out"));
            verify::write_witnesses(&dir, &report)?;
            print!("{}", verify::render(&report));
            let failed = report.failed_gating();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::VerifyFailed(failed))
            }
        }
        Command::Sweep { config, param, values } => {
            let cfg = load_scenario(&config, &overrides)?;
            let param: SweepParam =
                param.parse().map_err(|e: ets_core::scenario::ScenarioError| CliError::Config(e.to_string()))?;
            let cells = with_threads(cli.threads, || run::sweep(&cfg, param, &values))??;
            for c in &cells {
                println!(
                    "{param}={}: mean price {}, mean revenue {}, mean efficiency {}",
                    c.value, c.summary.clearing_price.mean, c.summary.revenue.mean, c.summary.efficiency_ratio.mean
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
