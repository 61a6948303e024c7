//! Experiment settings from a TOML file merged with command-line flags.
//! Flags win on conflict; relative paths in the file are resolved against the
//! file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use spknap::dataio::{Fraction, LogFormat, SyntheticSpec};
use spknap::experiment::{DatasetSource, ExperimentConfig, StrategySpec, DEFAULT_EPSILON, DEFAULT_SEEDS};
use spknap::report::ReportFormat;

use crate::{CliError, ExperimentArgs, FormatArg};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub raw_log: Option<bool>,
    pub values: Option<PathBuf>,
    pub advertiser: Option<String>,
    pub strategies: Option<Vec<String>>,
    pub fractions: Option<Vec<String>>,
    pub epsilon: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub baseline: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub reveal_losing_price: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut config: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for p in [&mut config.data, &mut config.spec, &mut config.values, &mut config.out] {
            if let Some(rel) = p.as_mut().filter(|p| p.is_relative()) {
                *rel = base.join(&*rel);
            }
        }
        Ok(config)
    }
}

/// Everything a subcommand needs after merging.
#[derive(Debug)]
pub struct Resolved {
    pub experiment: ExperimentConfig,
    pub baseline: Option<String>,
    pub out: Option<PathBuf>,
    pub format: ReportFormat,
}

pub fn resolve(args: &ExperimentArgs) -> Result<Resolved, CliError> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };

    let (data, spec) = if args.data.is_some() || args.spec.is_some() {
        (args.data.clone(), args.spec.clone())
    } else {
        (file.data, file.spec)
    };
    let source = match (data, spec) {
        (Some(_), Some(_)) => return Err(CliError::Config("give either a data file or a synthetic spec, not both".into())),
        (Some(path), None) => {
            let raw = args.raw_log || file.raw_log.unwrap_or(false);
            let format = if raw {
                LogFormat::RawLog {
                    value_sidecar: args.values.clone().or(file.values),
                    advertiser: args.advertiser.clone().or(file.advertiser),
                }
            } else {
                LogFormat::Processed
            };
            DatasetSource::File { path, format }
        }
        (None, Some(path)) => DatasetSource::Synthetic(SyntheticSpec::from_file(&path)?),
        (None, None) => return Err(CliError::Config("no dataset: pass --data or --spec".into())),
    };

    let strategies: Vec<StrategySpec> = if !args.strategy.is_empty() {
        args.strategy.clone()
    } else {
        file.strategies.unwrap_or_default()
    }
    .iter()
    .map(|s| s.parse().map_err(|e: spknap::experiment::ExperimentError| CliError::Config(e.to_string())))
    .collect::<Result<_, _>>()?;

    let fractions: Vec<Fraction> = match (args.fractions.clone(), file.fractions) {
        (Some(list), _) | (None, Some(list)) => list
            .iter()
            .map(|f| f.parse().map_err(|e: spknap::dataio::DataError| CliError::Config(e.to_string())))
            .collect::<Result<_, _>>()?,
        (None, None) => Fraction::protocol(),
    };

    let format = match (args.format, file.format.as_deref()) {
        (Some(FormatArg::Csv), _) | (None, None | Some("csv")) => ReportFormat::Csv,
        (Some(FormatArg::Md), _) | (None, Some("md")) => ReportFormat::Markdown,
        (None, Some(other)) => return Err(CliError::Config(format!("unknown report format `{other}` (csv or md)"))),
    };

    let experiment = ExperimentConfig {
        source,
        strategies,
        fractions,
        epsilon: args.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON),
        seeds: args
            .seeds
            .clone()
            .or(file.seeds)
            .unwrap_or_else(|| DEFAULT_SEEDS.to_vec()),
        reveal_losing_price: args.reveal_losing_price || file.reveal_losing_price.unwrap_or(false),
    };

    Ok(Resolved {
        experiment,
        baseline: args.baseline.clone().or(file.baseline),
        out: args.out.clone().or(file.out),
        format,
    })
}
