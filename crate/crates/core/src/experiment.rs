//! Experiment protocol: offline benchmarks per budget fraction, multi-seed
//! strategy runs scored against them, and ratios against a baseline strategy.
//!
//! Every (strategy, fraction, seed) cell is independent and runs on the rayon
//! pool; results are reassembled in configuration order so reports do not
//! depend on scheduling.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataio::{
    budget_fraction, generate_synthetic, parse_impressions, DataError, Fraction, LogFormat,
    SyntheticSpec,
};
use crate::knapsack::{Budget, Impression, TOLERANCE};
use crate::simulator::{
    offline_benchmark, permute_stream, simulate, OfflineBenchmark, SimulationError,
    SimulationOptions,
};
use crate::strategies::{
    AdaptivePacingPolicy, BidBudgetPolicy, BidPolicy, LinearBidPolicy, OslaPolicy, PolicyError,
    PrimalRandomizedPolicy, ZeroBidPolicy,
};

/// Training share of the stream used by the one-shot learner unless a
/// strategy overrides it.
pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("strategy {strategy}: {source}")]
    Policy {
        strategy: String,
        #[source]
        source: PolicyError,
    },
    #[error("strategy {strategy}, fraction {fraction}, seed {seed}: {source}")]
    Simulation {
        strategy: String,
        fraction: Fraction,
        seed: u64,
        #[source]
        source: SimulationError,
    },
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    File { path: PathBuf, format: LogFormat },
    Synthetic(SyntheticSpec),
}

impl DatasetSource {
    /// Short name used in report rows.
    pub fn label(&self) -> String {
        match self {
            DatasetSource::File { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            DatasetSource::Synthetic(spec) => format!("synthetic-n{}-s{}", spec.n, spec.seed),
        }
    }

    pub fn load(&self) -> Result<Vec<Impression>, DataError> {
        match self {
            DatasetSource::File { path, format } => {
                let parsed = parse_impressions(path, format)?;
                if parsed.dropped() > 0 {
                    info!(
                        "{}: dropped {} rows ({} missing fields, {} unparsable, {} filtered)",
                        path.display(),
                        parsed.dropped(),
                        parsed.dropped_missing,
                        parsed.failed,
                        parsed.filtered
                    );
                }
                Ok(parsed.impressions)
            }
            DatasetSource::Synthetic(spec) => generate_synthetic(spec),
        }
    }
}

/// A strategy and its parameters, written `name` or `name=param,...`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategySpec {
    /// One-shot learner; the training share defaults to the experiment's ε.
    Osla { epsilon: Option<f64> },
    /// Dual-descent pacing; the step defaults to `1/√N`.
    Pacing { step: Option<f64> },
    Primal,
    /// Linear bid `v/λ`; without a λ it uses the hindsight threshold λ*.
    Linear { lambda: Option<f64> },
    BidBudget,
    Zero,
}

impl StrategySpec {
    pub fn name(&self) -> &'static str {
        match self {
            StrategySpec::Osla { .. } => "osla",
            StrategySpec::Pacing { .. } => "pacing",
            StrategySpec::Primal => "primal",
            StrategySpec::Linear { .. } => "linear",
            StrategySpec::BidBudget => "bid-budget",
            StrategySpec::Zero => "zero",
        }
    }

    /// Builds a fresh policy for one simulation.
    pub fn build(&self, cell: &CellSetup) -> Result<Box<dyn BidPolicy>, PolicyError> {
        Ok(match *self {
            StrategySpec::Osla { epsilon } => {
                Box::new(OslaPolicy::new(epsilon.unwrap_or(cell.epsilon), cell.budget)?)
            }
            StrategySpec::Pacing { step } => {
                let policy = AdaptivePacingPolicy::for_horizon(cell.budget, cell.horizon)?;
                Box::new(match step {
                    Some(step) => policy.with_step(step)?,
                    None => policy,
                })
            }
            StrategySpec::Primal => Box::new(PrimalRandomizedPolicy::new(cell.budget)),
            StrategySpec::Linear { lambda: Some(lambda) } => Box::new(LinearBidPolicy::new(lambda)?),
            StrategySpec::Linear { lambda: None } if cell.lambda_star > 0.0 => {
                Box::new(LinearBidPolicy::new(cell.lambda_star)?)
            }
            // λ* = 0: the whole stream is affordable.
            StrategySpec::Linear { lambda: None } => Box::new(BidBudgetPolicy),
            StrategySpec::BidBudget => Box::new(BidBudgetPolicy),
            StrategySpec::Zero => Box::new(ZeroBidPolicy),
        })
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        match *self {
            StrategySpec::Osla { epsilon: Some(p) }
            | StrategySpec::Pacing { step: Some(p) }
            | StrategySpec::Linear { lambda: Some(p) } => write!(f, "={p}"),
            _ => Ok(()),
        }
    }
}

impl FromStr for StrategySpec {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, params) = match s.split_once('=') {
            Some((name, params)) => (name.trim(), Some(params)),
            None => (s, None),
        };
        let values: Vec<f64> = match params {
            Some(p) => p
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| ExperimentError::Config(format!("bad parameter `{v}` in strategy `{s}`")))
                })
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        if values.len() > 1 {
            return Err(ExperimentError::Config(format!("strategy `{s}` takes at most one parameter")));
        }
        let param = values.first().copied();
        let positive = |what: &str| -> Result<Option<f64>, ExperimentError> {
            match param {
                Some(p) if p <= 0.0 => Err(ExperimentError::Config(format!("{what} must be positive in `{s}`"))),
                p => Ok(p),
            }
        };
        let spec = match name {
            "osla" => {
                if let Some(eps) = param {
                    if !(eps > 0.0 && eps < 1.0) {
                        return Err(ExperimentError::Config(format!("epsilon must lie in (0, 1) in `{s}`")));
                    }
                }
                StrategySpec::Osla { epsilon: param }
            }
            "pacing" => StrategySpec::Pacing { step: positive("step")? },
            "linear" => StrategySpec::Linear { lambda: positive("lambda")? },
            "primal" | "bid-budget" | "zero" if param.is_some() => {
                return Err(ExperimentError::Config(format!("strategy `{name}` takes no parameter")));
            }
            "primal" => StrategySpec::Primal,
            "bid-budget" => StrategySpec::BidBudget,
            "zero" => StrategySpec::Zero,
            other => {
                return Err(ExperimentError::Config(format!(
                    "unknown strategy `{other}` (expected osla, pacing, primal, linear, bid-budget or zero)"
                )))
            }
        };
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DatasetSource,
    pub strategies: Vec<StrategySpec>,
    pub fractions: Vec<Fraction>,
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    pub reveal_losing_price: bool,
}

impl ExperimentConfig {
    /// Protocol defaults: the four budget fractions, ε = 1% and five seeds.
    pub fn new(source: DatasetSource, strategies: Vec<StrategySpec>) -> Self {
        Self {
            source,
            strategies,
            fractions: Fraction::protocol(),
            epsilon: DEFAULT_EPSILON,
            seeds: DEFAULT_SEEDS.to_vec(),
            reveal_losing_price: false,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.strategies.is_empty() {
            return Err(ExperimentError::Config("at least one strategy is required".into()));
        }
        if self.fractions.is_empty() {
            return Err(ExperimentError::Config("at least one budget fraction is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(ExperimentError::Config("at least one seed is required".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(ExperimentError::Config(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// What a policy may be built from for one (fraction, seed) cell.
#[derive(Debug, Clone, Copy)]
pub struct CellSetup {
    pub budget: Budget,
    pub horizon: usize,
    pub epsilon: f64,
    /// Hindsight threshold; only the `linear` strategy without λ reads it.
    pub lambda_star: f64,
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// `100 · part / whole`, or 0 when there is nothing to compare against.
pub fn percent(part: f64, whole: f64) -> f64 {
    if whole > 0.0 {
        100.0 * part / whole
    } else {
        0.0
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation; 0 for fewer than two values.
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Optimal bundle for one budget fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub dataset: String,
    pub fraction: Fraction,
    pub budget: f64,
    pub optimal_value: f64,
    /// Share of the dataset's total value, in percent.
    pub value_pct: f64,
    pub optimal_clicks: usize,
    /// Share of the dataset's clicks, in percent.
    pub clicks_pct: f64,
    pub lambda_star: f64,
    pub spend: f64,
}

/// One simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub dataset: String,
    pub fraction: Fraction,
    pub strategy: String,
    pub seed: u64,
    pub budget: f64,
    pub value: f64,
    /// Share of the optimal-bundle value, in percent.
    pub value_pct: f64,
    pub clicks: usize,
    pub clicks_pct: f64,
    pub spend: f64,
    pub lambda_hat: Option<f64>,
    pub lambda_star: f64,
    pub feasible: bool,
    /// The policy collected more than the integral benchmark, which is only
    /// possible within the value of the marginal ad.
    pub exceeds_benchmark: bool,
}

/// Seed average for one (fraction, strategy).
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dataset: String,
    pub fraction: Fraction,
    pub strategy: String,
    pub seeds: usize,
    pub value_mean: f64,
    pub value_std: f64,
    pub value_pct_mean: f64,
    pub value_pct_std: f64,
    pub clicks_mean: f64,
    pub clicks_pct_mean: f64,
    pub lambda_hat_mean: Option<f64>,
    pub lambda_star: f64,
    pub optimal_value: f64,
    pub all_feasible: bool,
    pub exceeds_benchmark: bool,
}

impl RunSummary {
    /// λ̂ / λ*, when both are defined and λ* is positive.
    pub fn lambda_ratio(&self) -> Option<f64> {
        self.lambda_hat_mean
            .filter(|_| self.lambda_star > 0.0)
            .map(|hat| hat / self.lambda_star)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub cells: Vec<CellResult>,
    pub summaries: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub dataset: String,
    pub fraction: Fraction,
    pub strategy: String,
    pub baseline: String,
    pub value_mean: f64,
    pub value_pct_mean: f64,
    pub baseline_value_mean: f64,
    /// Mean value over mean baseline value, in percent. Undefined when the
    /// baseline collected nothing.
    pub ratio_pct: Option<f64>,
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn benchmark_rows(
    dataset: &str,
    ads: &[Impression],
    fractions: &[Fraction],
) -> Vec<(BenchmarkRow, OfflineBenchmark)> {
    let total_value: f64 = ads.iter().map(|ad| ad.value).sum();
    let total_clicks = ads.iter().filter(|ad| ad.clicked == Some(true)).count();
    fractions
        .iter()
        .map(|&fraction| {
            let budget = budget_fraction(ads, fraction);
            let bench = offline_benchmark(ads, budget);
            let row = BenchmarkRow {
                dataset: dataset.to_string(),
                fraction,
                budget: budget.total(),
                optimal_value: bench.optimal_value,
                value_pct: percent(bench.optimal_value, total_value),
                optimal_clicks: bench.optimal_clicks,
                clicks_pct: percent(bench.optimal_clicks as f64, total_clicks as f64),
                lambda_star: bench.lambda_star,
                spend: bench.spend,
            };
            (row, bench)
        })
        .collect()
}

/// Optimal bundle for each budget fraction of `ads`.
pub fn benchmark_dataset(dataset: &str, ads: &[Impression], fractions: &[Fraction]) -> Vec<BenchmarkRow> {
    benchmark_rows(dataset, ads, fractions).into_iter().map(|(row, _)| row).collect()
}

pub fn cmd_benchmark(config: &ExperimentConfig) -> Result<Vec<BenchmarkRow>, ExperimentError> {
    if config.fractions.is_empty() {
        return Err(ExperimentError::Config("at least one budget fraction is required".into()));
    }
    let ads = config.source.load()?;
    Ok(benchmark_dataset(&config.source.label(), &ads, &config.fractions))
}

/// Runs every (fraction, strategy, seed) cell on `ads`.
pub fn run_dataset(
    dataset: &str,
    ads: &[Impression],
    config: &ExperimentConfig,
) -> Result<RunReport, ExperimentError> {
    config.validate()?;
    let horizon = ads.len();
    let b_max = ads.iter().map(|ad| ad.paying_price).fold(0.0, f64::max);
    let benches = benchmark_rows(dataset, ads, &config.fractions);

    for (row, _) in &benches {
        for strategy in &config.strategies {
            if let StrategySpec::Osla { epsilon } = strategy {
                let budget = Budget::new(row.budget).unwrap_or_else(|_| Budget::zero());
                OslaPolicy::new(epsilon.unwrap_or(config.epsilon), budget)
                    .map_err(|source| ExperimentError::Policy {
                        strategy: strategy.to_string(),
                        source,
                    })?
                    .check_feasibility(horizon, b_max);
            }
        }
    }

    let streams: Vec<Vec<Impression>> = config
        .seeds
        .par_iter()
        .map(|&seed| permute_stream(ads, seed))
        .collect();
    let options = SimulationOptions {
        reveal_losing_price: config.reveal_losing_price,
        keep_trace: false,
    };

    let mut jobs = Vec::new();
    for (f, _) in benches.iter().enumerate() {
        for (s, _) in config.strategies.iter().enumerate() {
            for k in 0..config.seeds.len() {
                jobs.push((f, s, k));
            }
        }
    }

    let cells: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(f, s, k)| {
            let (row, bench) = &benches[f];
            let strategy = &config.strategies[s];
            let seed = config.seeds[k];
            let setup = CellSetup {
                budget: Budget::new(row.budget).unwrap_or_else(|_| Budget::zero()),
                horizon,
                epsilon: config.epsilon,
                lambda_star: bench.lambda_star,
            };
            let mut policy = strategy.build(&setup).map_err(|source| ExperimentError::Policy {
                strategy: strategy.to_string(),
                source,
            })?;
            let result = simulate(policy.as_mut(), &streams[k], setup.budget, seed, options).map_err(
                |source| ExperimentError::Simulation {
                    strategy: strategy.to_string(),
                    fraction: row.fraction,
                    seed,
                    source,
                },
            )?;
            let slack = TOLERANCE * bench.optimal_value.max(1.0);
            Ok(CellResult {
                dataset: dataset.to_string(),
                fraction: row.fraction,
                strategy: strategy.to_string(),
                seed,
                budget: row.budget,
                value: result.total_value,
                value_pct: percent(result.total_value, bench.optimal_value),
                clicks: result.clicks,
                clicks_pct: percent(result.clicks as f64, bench.optimal_clicks as f64),
                spend: result.total_spend,
                lambda_hat: result.learned_lambda,
                lambda_star: bench.lambda_star,
                feasible: result.is_feasible(),
                exceeds_benchmark: result.total_value > bench.optimal_value + slack,
            })
        })
        .collect::<Result<_, ExperimentError>>()?;

    let per_group = config.seeds.len();
    let summaries = cells
        .chunks(per_group)
        .zip(jobs.chunks(per_group))
        .map(|(group, jobs)| {
            let (_, bench) = &benches[jobs[0].0];
            summarize_cells(group, bench)
        })
        .collect();
    Ok(RunReport { cells, summaries })
}

fn summarize_cells(group: &[CellResult], bench: &OfflineBenchmark) -> RunSummary {
    let values: Vec<f64> = group.iter().map(|c| c.value).collect();
    let pcts: Vec<f64> = group.iter().map(|c| c.value_pct).collect();
    let clicks: Vec<f64> = group.iter().map(|c| c.clicks as f64).collect();
    let click_pcts: Vec<f64> = group.iter().map(|c| c.clicks_pct).collect();
    let hats: Vec<f64> = group.iter().filter_map(|c| c.lambda_hat).collect();
    let first = &group[0];
    RunSummary {
        dataset: first.dataset.clone(),
        fraction: first.fraction,
        strategy: first.strategy.clone(),
        seeds: group.len(),
        value_mean: mean(&values),
        value_std: std_dev(&values),
        value_pct_mean: mean(&pcts),
        value_pct_std: std_dev(&pcts),
        clicks_mean: mean(&clicks),
        clicks_pct_mean: mean(&click_pcts),
        lambda_hat_mean: (!hats.is_empty()).then(|| mean(&hats)),
        lambda_star: bench.lambda_star,
        optimal_value: bench.optimal_value,
        all_feasible: group.iter().all(|c| c.feasible),
        exceeds_benchmark: group.iter().any(|c| c.exceeds_benchmark),
    }
}

pub fn cmd_run(config: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    config.validate()?;
    let ads = config.source.load()?;
    run_dataset(&config.source.label(), &ads, config)
}

/// Ratios of each strategy's mean value to the baseline's, per fraction.
pub fn compare_summaries(summaries: &[RunSummary], baseline: &str) -> Result<Vec<CompareRow>, ExperimentError> {
    if !summaries.iter().any(|s| s.strategy == baseline) {
        return Err(ExperimentError::Config(format!(
            "baseline `{baseline}` is not among the strategies"
        )));
    }
    let mut rows = Vec::new();
    for summary in summaries {
        let base = summaries
            .iter()
            .find(|s| s.strategy == baseline && s.fraction == summary.fraction && s.dataset == summary.dataset)
            .ok_or_else(|| ExperimentError::Config(format!("baseline `{baseline}` missing for fraction {}", summary.fraction)))?;
        rows.push(CompareRow {
            dataset: summary.dataset.clone(),
            fraction: summary.fraction,
            strategy: summary.strategy.clone(),
            baseline: baseline.to_string(),
            value_mean: summary.value_mean,
            value_pct_mean: summary.value_pct_mean,
            baseline_value_mean: base.value_mean,
            ratio_pct: if base.value_mean > 0.0 {
                Some(summary.value_mean / base.value_mean * 100.0)
            } else if summary.value_mean == 0.0 {
                Some(100.0)
            } else {
                None
            },
        });
    }
    Ok(rows)
}

/// Runs the experiment and compares every strategy with `baseline`. The
/// baseline is named as it appears in the strategy list, e.g. `pacing` or
/// `osla=0.05`.
pub fn cmd_compare(config: &ExperimentConfig, baseline: &str) -> Result<(RunReport, Vec<CompareRow>), ExperimentError> {
    config.validate()?;
    let baseline = baseline
        .parse::<StrategySpec>()
        .map(|spec| spec.to_string())
        .unwrap_or_else(|_| baseline.to_string());
    if !config.strategies.iter().any(|s| s.to_string() == baseline) {
        return Err(ExperimentError::Config(format!(
            "baseline `{baseline}` is not among the strategies"
        )));
    }
    let report = cmd_run(config)?;
    let rows = compare_summaries(&report.summaries, &baseline)?;
    Ok((report, rows))
}
