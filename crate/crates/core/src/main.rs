use afcs::cli::{cmd_efficiency, cmd_simulate, cmd_sweep, cmd_theory, parse_range, Format, OutputTable};
use afcs::model::parse_pairs;
use afcs::montecarlo::Execution;
use afcs::SystemConfig;
use clap::{Args, Parser, Subcommand};
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

/// Optimal adaptive feedback communication system: theory, simulation and
/// efficiency tables.
#[derive(Debug, Parser)]
#[command(name = "afcs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact and closed-form MMSE per cycle
    Theory(Common),
    /// Monte Carlo ensemble compared against the MMSE recursion
    Simulate(SimulateArgs),
    /// Output bit-rate against the number of cycles
    Sweep(RangeArgs),
    /// Power-bandwidth efficiency points against the number of cycles
    Efficiency(RangeArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Config file (`key = value` lines); defaults to the built-in reference system
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set sigma_v_sq=1e-6`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Write to this file instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Exit with status 1 unless the ensemble agrees with theory
    #[arg(long)]
    check: bool,
    /// Run trials on the calling thread only
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct RangeArgs {
    #[command(flatten)]
    common: Common,
    /// Cycle counts as `START:END` (inclusive); defaults to `1:n_cycles`
    #[arg(long, value_parser = parse_range)]
    n_range: Option<RangeInclusive<usize>>,
}

enum Failure {
    Usage(String),
    Check,
}

fn load_config(common: &Common) -> Result<SystemConfig, Failure> {
    let mut pairs: Vec<(String, String)> = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            parse_pairs(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => SystemConfig::reference()
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
    };
    for raw in &common.overrides {
        let (k, v) = raw
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got `{raw}`")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    SystemConfig::from_pairs(pairs).map_err(|e| Failure::Usage(e.to_string()))
}

fn emit(table: &OutputTable, common: &Common) -> Result<(), Failure> {
    let text = table.render(common.format);
    match &common.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let usage = |e: afcs::Error| Failure::Usage(e.to_string());
    match cli.command {
        Command::Theory(common) => {
            let config = load_config(&common)?;
            emit(&cmd_theory(&config).map_err(usage)?, &common)
        }
        Command::Simulate(args) => {
            let config = load_config(&args.common)?;
            let execution = if args.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let (table, report) =
                cmd_simulate(&config, args.trials, args.seed, execution).map_err(usage)?;
            emit(&table, &args.common)?;
            if args.check && !report.pass() {
                eprintln!(
                    "check failed: max |z| = {:.3}, mse within tolerance: {}, clip rate {:.6} vs mu {} (band {:.6})",
                    report.max_abs_z, report.mse_pass, report.clip_rate, report.mu, report.clip_band
                );
                return Err(Failure::Check);
            }
            Ok(())
        }
        Command::Sweep(args) => {
            let config = load_config(&args.common)?;
            let range = args.n_range.unwrap_or(1..=config.n_cycles);
            emit(&cmd_sweep(&config, range).map_err(usage)?, &args.common)
        }
        Command::Efficiency(args) => {
            let config = load_config(&args.common)?;
            let range = args.n_range.unwrap_or(1..=config.n_cycles);
            emit(&cmd_efficiency(&config, range).map_err(usage)?, &args.common)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
