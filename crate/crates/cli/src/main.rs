//! `spknap`: generate synthetic streams, benchmark the offline optimum, run
//! bidding strategies against it and compare them.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use spknap::dataio::{generate_synthetic, summarize, write_processed_file, DataError, SyntheticSpec};
use spknap::experiment::{cmd_benchmark, cmd_compare, cmd_run, ExperimentError};
use spknap::report::{self, ReportFormat};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Simulation(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Simulation(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Simulation(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidSpec(_) | DataError::SpecFile { .. } => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) | ExperimentError::Policy { .. } => CliError::Config(e.to_string()),
            ExperimentError::Data(inner) => inner.into(),
            ExperimentError::Simulation { .. } => CliError::Simulation(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "spknap", version, about = "Budget-constrained bidding in second-price auctions")]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic impression stream as processed CSV.
    Generate(GenerateArgs),
    /// Optimal bundle for each budget fraction.
    Benchmark(ExperimentArgs),
    /// Simulate strategies and score them against the optimal bundle.
    Run(ExperimentArgs),
    /// Like `run`, plus each strategy's value relative to a baseline.
    Compare(ExperimentArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Synthetic stream spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Csv,
    Md,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// TOML file with any of the settings below; flags win on conflict.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Impression file (processed CSV unless --raw-log).
    #[arg(long, conflicts_with = "spec")]
    data: Option<PathBuf>,
    /// Synthetic stream spec (TOML) to generate the dataset from.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Read --data as a tab-separated raw impression log.
    #[arg(long)]
    raw_log: bool,
    /// `bid_id,value` sidecar for raw logs without a value column.
    #[arg(long)]
    values: Option<PathBuf>,
    /// Keep only this advertiser's rows of a raw log.
    #[arg(long)]
    advertiser: Option<String>,
    /// Strategy as `name` or `name=param`; repeatable. Names: osla, pacing,
    /// primal, linear, bid-budget, zero. Plain `linear` bids with the
    /// hindsight threshold of each cell, an oracle baseline.
    #[arg(long)]
    strategy: Vec<String>,
    /// Budget fractions of historical spend, e.g. 1/2,1/4.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<String>>,
    /// Training share of the one-shot learner.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Seeds, e.g. 1,2,3.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Strategy the others are compared with.
    #[arg(long)]
    baseline: Option<String>,
    /// Directory for report files; reports go to stdout only when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table format printed to stdout; CSV files are always written.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Show the paying price of lost auctions to every strategy.
    #[arg(long)]
    reveal_losing_price: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(args) => generate(&args),
        Command::Benchmark(args) => {
            let resolved = config::resolve(&args)?;
            let rows = cmd_benchmark(&resolved.experiment)?;
            emit(
                &resolved.out,
                resolved.format,
                &[("benchmark", report::benchmark_csv(&rows), report::benchmark_markdown(&rows))],
            )
        }
        Command::Run(args) => {
            let resolved = config::resolve(&args)?;
            let run = cmd_run(&resolved.experiment)?;
            emit(
                &resolved.out,
                resolved.format,
                &[
                    ("run_cells", report::cells_csv(&run.cells), report::cells_markdown(&run.cells)),
                    (
                        "run_summary",
                        report::summaries_csv(&run.summaries),
                        report::summaries_markdown(&run.summaries),
                    ),
                ],
            )
        }
        Command::Compare(args) => {
            let resolved = config::resolve(&args)?;
            let baseline = resolved
                .baseline
                .clone()
                .ok_or_else(|| CliError::Config("compare needs --baseline".into()))?;
            let (run, rows) = cmd_compare(&resolved.experiment, &baseline)?;
            emit(
                &resolved.out,
                resolved.format,
                &[
                    ("run_cells", report::cells_csv(&run.cells), report::cells_markdown(&run.cells)),
                    (
                        "run_summary",
                        report::summaries_csv(&run.summaries),
                        report::summaries_markdown(&run.summaries),
                    ),
                    ("compare", report::compare_csv(&rows), report::compare_markdown(&rows)),
                ],
            )
        }
    }
}

fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let spec = SyntheticSpec::from_file(&args.spec)?;
    let ads = generate_synthetic(&spec)?;
    write_processed_file(&ads, &args.out)?;
    let summary = summarize(&ads);
    info!(
        "wrote {} impressions to {} (ctr {:.5}, total cost {:.3})",
        summary.impressions,
        args.out.display(),
        summary.ctr,
        summary.total_cost
    );
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes each `(name, csv, markdown)` table to `out` (CSV always, markdown
/// too when requested) and prints the last table to stdout.
fn emit(out: &Option<PathBuf>, format: ReportFormat, tables: &[(&str, String, String)]) -> Result<(), CliError> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        for (name, csv, md) in tables {
            write_file(&dir.join(format!("{name}.csv")), csv)?;
            if format == ReportFormat::Markdown {
                write_file(&dir.join(format!("{name}.md")), md)?;
            }
        }
    }
    if let Some((_, csv, md)) = tables.last() {
        match format {
            ReportFormat::Csv => print!("{csv}"),
            ReportFormat::Markdown => print!("{md}"),
        }
    }
    Ok(())
}
