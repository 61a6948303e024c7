//! Impression streams: synthetic generation, log ingestion, experiment budgets
//! and dataset summaries.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knapsack::{Budget, Impression};
use crate::simulator::seeded_rng;

/// Parse failures above this share of rows abort ingestion.
pub const MAX_FAILED_ROW_SHARE: f64 = 0.10;

pub const PROCESSED_HEADER: [&str; 4] = ["id", "value", "paying_price", "clicked"];

/// Column count of a raw impression log row.
pub const RAW_COLUMNS: usize = 24;
/// 0-based position of "Bid ID".
const RAW_BID_ID: usize = 0;
/// 0-based position of "Paying price" (column 21).
const RAW_PAYING_PRICE: usize = 20;
/// 0-based position of "Advertiser ID" (column 23).
const RAW_ADVERTISER: usize = 22;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed header, expected `{expected}`, found `{found}`")]
    MalformedHeader {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: {failed} of {rows} rows failed to parse (limit 10%), first error: {first}")]
    TooManyFailures {
        path: PathBuf,
        failed: usize,
        rows: usize,
        first: String,
    },
    #[error("{path}: duplicate impression id {id}")]
    DuplicateId { path: PathBuf, id: u64 },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: cannot read spec: {message}")]
    SpecFile { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Synthetic streams
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl Distribution {
    fn validate(&self) -> Result<(), DataError> {
        match *self {
            Distribution::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo => Ok(()),
            Distribution::LogNormal { mu, sigma } if mu.is_finite() && sigma.is_finite() && sigma > 0.0 => Ok(()),
            other => Err(DataError::InvalidSpec(format!("invalid distribution {other}"))),
        }
    }

    /// Maps a standard normal draw through this distribution's quantile
    /// function, which keeps ranks intact.
    fn from_normal(&self, z: f64) -> f64 {
        match *self {
            Distribution::Uniform { lo, hi } => lo + (hi - lo) * standard_normal_cdf(z),
            Distribution::LogNormal { mu, sigma } => (mu + sigma * z).exp(),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            Distribution::LogNormal { mu, sigma } => write!(f, "lognormal({mu},{sigma})"),
        }
    }
}

fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Parses `name(a,b)` into its name and numeric arguments.
fn parse_call(s: &str) -> Option<(String, Vec<f64>)> {
    let s = s.trim();
    let open = s.find('(')?;
    let body = s.strip_suffix(')')?.get(open + 1..)?;
    let name = s[..open].trim().to_ascii_lowercase();
    let args = body
        .split(',')
        .map(|a| a.trim().parse::<f64>().ok())
        .collect::<Option<Vec<_>>>()?;
    Some((name, args))
}

impl FromStr for Distribution {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DataError::InvalidSpec(format!("cannot parse distribution `{s}`"));
        let (name, args) = parse_call(s).ok_or_else(bad)?;
        let dist = match (name.as_str(), args.as_slice()) {
            ("uniform", &[lo, hi]) => Distribution::Uniform { lo, hi },
            ("lognormal", &[mu, sigma]) => Distribution::LogNormal { mu, sigma },
            _ => return Err(bad()),
        };
        dist.validate()?;
        Ok(dist)
    }
}

/// Click probability as a function of value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClickModel {
    None,
    /// `P(click) = 1 / (1 + exp(-(intercept + slope · value)))`.
    Logistic { intercept: f64, slope: f64 },
}

impl ClickModel {
    /// Logistic model with a flat click probability.
    pub fn constant(probability: f64) -> Self {
        ClickModel::Logistic {
            intercept: (probability / (1.0 - probability)).ln(),
            slope: 0.0,
        }
    }

    pub fn probability(&self, value: f64) -> f64 {
        match *self {
            ClickModel::None => 0.0,
            ClickModel::Logistic { intercept, slope } => 1.0 / (1.0 + (-(intercept + slope * value)).exp()),
        }
    }
}

impl fmt::Display for ClickModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClickModel::None => write!(f, "none"),
            ClickModel::Logistic { intercept, slope } => write!(f, "logistic({intercept},{slope})"),
        }
    }
}

impl FromStr for ClickModel {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("none") {
            return Ok(ClickModel::None);
        }
        let bad = || DataError::InvalidSpec(format!("cannot parse click model `{s}`"));
        match parse_call(s).ok_or_else(bad)? {
            (name, args) if name == "logistic" && args.len() == 2 && args.iter().all(|a| a.is_finite()) => {
                Ok(ClickModel::Logistic {
                    intercept: args[0],
                    slope: args[1],
                })
            }
            (name, args) if name == "constant" && args.len() == 1 && args[0] > 0.0 && args[0] < 1.0 => {
                Ok(ClickModel::constant(args[0]))
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub value_dist: Distribution,
    pub price_dist: Distribution,
    /// Target Spearman rank correlation between value and price.
    pub correlation: f64,
    pub click_model: ClickModel,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Stable lognormal stream used by the benchmarks: values sit above prices
    /// on average, so bidding the value buys most of the stream.
    pub fn stable(n: usize, seed: u64) -> Self {
        Self {
            n,
            value_dist: Distribution::LogNormal { mu: -1.1, sigma: 0.6 },
            price_dist: Distribution::LogNormal { mu: -1.6, sigma: 0.4 },
            correlation: 0.3,
            click_model: ClickModel::Logistic {
                intercept: -7.5,
                slope: 1.0,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.value_dist.validate()?;
        self.price_dist.validate()?;
        if !(-1.0..=1.0).contains(&self.correlation) {
            return Err(DataError::InvalidSpec(format!(
                "correlation must lie in [-1, 1], got {}",
                self.correlation
            )));
        }
        Ok(())
    }

    /// Reads a flat `key = value` file (TOML syntax):
    ///
    /// ```text
    /// n = 100000
    /// value_dist = "lognormal(-1.1,0.6)"
    /// price_dist = "lognormal(-1.6,0.4)"
    /// correlation = 0.3
    /// click_model = "logistic(-7.5,1)"
    /// seed = 7
    /// ```
    pub fn from_file(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            DataError::InvalidSpec(message) => DataError::SpecFile {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| DataError::InvalidSpec(e.to_string()))?;
        let n = usize::try_from(raw.n).map_err(|_| DataError::InvalidSpec(format!("n must be >= 0, got {}", raw.n)))?;
        let spec = Self {
            n,
            value_dist: raw.value_dist.parse()?,
            price_dist: raw.price_dist.parse()?,
            correlation: raw.correlation.unwrap_or(0.0),
            click_model: raw.click_model.as_deref().unwrap_or("none").parse()?,
            seed: raw.seed.unwrap_or(0),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        format!(
            "n = {}\nvalue_dist = \"{}\"\nprice_dist = \"{}\"\ncorrelation = {:?}\nclick_model = \"{}\"\nseed = {}\n",
            self.n, self.value_dist, self.price_dist, self.correlation, self.click_model, self.seed
        )
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    n: i64,
    value_dist: String,
    price_dist: String,
    correlation: Option<f64>,
    click_model: Option<String>,
    seed: Option<u64>,
}

/// Draws `spec.n` impressions with ids `0..n`.
///
/// Value and price are coupled through a Gaussian copula whose correlation is
/// set from the requested rank correlation (`ρ = 2 sin(π ρ_s / 6)`).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<Impression>, DataError> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed, 0);
    let rho = 2.0 * (std::f64::consts::PI * spec.correlation / 6.0).sin();
    let rho = rho.clamp(-1.0, 1.0);
    let orth = (1.0 - rho * rho).max(0.0).sqrt();

    let ads = (0..spec.n)
        .map(|i| {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let value = spec.value_dist.from_normal(z1);
            let price = spec.price_dist.from_normal(rho * z1 + orth * z2);
            let mut ad = Impression::new(i as u64, value, price);
            if spec.click_model != ClickModel::None {
                let clicked = rng.random::<f64>() < spec.click_model.probability(value);
                ad = ad.with_click(clicked);
            }
            ad
        })
        .collect();
    Ok(ads)
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum LogFormat {
    /// `id,value,paying_price,clicked` CSV.
    Processed,
    /// Tab-separated 24-column impression log. Values come from a 25th column
    /// when present, otherwise from the sidecar keyed by bid id.
    RawLog {
        value_sidecar: Option<PathBuf>,
        advertiser: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedImpressions {
    pub impressions: Vec<Impression>,
    /// Rows with a mandatory field missing.
    pub dropped_missing: usize,
    /// Rows that failed to parse.
    pub failed: usize,
    /// Rows excluded by the advertiser filter.
    pub filtered: usize,
    pub rows: usize,
}

impl ParsedImpressions {
    pub fn dropped(&self) -> usize {
        self.dropped_missing + self.failed + self.filtered
    }
}

enum RowError {
    Missing,
    Malformed(String),
}

struct Tally {
    path: PathBuf,
    rows: usize,
    missing: usize,
    failed: usize,
    filtered: usize,
    first_error: Option<String>,
}

impl Tally {
    fn new(path: &Path) -> Self {
        Self {
            path: path.to_path_buf(),
            rows: 0,
            missing: 0,
            failed: 0,
            filtered: 0,
            first_error: None,
        }
    }

    fn reject(&mut self, err: RowError) {
        match err {
            RowError::Missing => self.missing += 1,
            RowError::Malformed(msg) => {
                self.failed += 1;
                self.first_error.get_or_insert(msg);
            }
        }
    }

    fn finish(self, impressions: Vec<Impression>) -> Result<ParsedImpressions, DataError> {
        if self.rows > 0 && self.failed as f64 > MAX_FAILED_ROW_SHARE * self.rows as f64 {
            return Err(DataError::TooManyFailures {
                path: self.path,
                failed: self.failed,
                rows: self.rows,
                first: self.first_error.unwrap_or_default(),
            });
        }
        let mut seen = HashSet::with_capacity(impressions.len());
        for ad in &impressions {
            if !seen.insert(ad.id) {
                return Err(DataError::DuplicateId {
                    path: self.path,
                    id: ad.id,
                });
            }
        }
        Ok(ParsedImpressions {
            impressions,
            dropped_missing: self.missing,
            failed: self.failed,
            filtered: self.filtered,
            rows: self.rows,
        })
    }
}

fn parse_amount(field: &str, name: &str) -> Result<f64, RowError> {
    let field = field.trim();
    if field.is_empty() || field.eq_ignore_ascii_case("null") {
        return Err(RowError::Missing);
    }
    match field.parse::<f64>() {
        Ok(x) if x.is_finite() && x >= 0.0 => Ok(x),
        _ => Err(RowError::Malformed(format!("bad {name} `{field}`"))),
    }
}

pub fn parse_impressions(path: &Path, format: &LogFormat) -> Result<ParsedImpressions, DataError> {
    match format {
        LogFormat::Processed => parse_processed(path),
        LogFormat::RawLog {
            value_sidecar,
            advertiser,
        } => parse_raw_log(path, value_sidecar.as_deref(), advertiser.as_deref()),
    }
}

fn parse_processed(path: &Path) -> Result<ParsedImpressions, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let header = reader.headers().map_err(csv_err)?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != PROCESSED_HEADER {
        return Err(DataError::MalformedHeader {
            path: path.to_path_buf(),
            expected: PROCESSED_HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut tally = Tally::new(path);
    let mut impressions = Vec::new();
    for record in reader.records() {
        tally.rows += 1;
        let parsed = record
            .map_err(|e| RowError::Malformed(e.to_string()))
            .and_then(|r| parse_processed_row(&r));
        match parsed {
            Ok(ad) => impressions.push(ad),
            Err(e) => tally.reject(e),
        }
    }
    tally.finish(impressions)
}

fn parse_processed_row(record: &csv::StringRecord) -> Result<Impression, RowError> {
    if record.len() != PROCESSED_HEADER.len() {
        return Err(RowError::Malformed(format!("expected 4 fields, found {}", record.len())));
    }
    let id_field = record[0].trim();
    if id_field.is_empty() {
        return Err(RowError::Missing);
    }
    let id = id_field
        .parse::<u64>()
        .map_err(|_| RowError::Malformed(format!("bad id `{id_field}`")))?;
    let value = parse_amount(&record[1], "value")?;
    let price = parse_amount(&record[2], "paying_price")?;
    let clicked = match record[3].trim() {
        "" => None,
        "0" => Some(false),
        "1" => Some(true),
        other => return Err(RowError::Malformed(format!("bad clicked `{other}`"))),
    };
    Ok(Impression {
        id,
        value,
        paying_price: price,
        clicked,
    })
}

fn read_sidecar(path: &Path) -> Result<HashMap<String, f64>, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut values = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|source| DataError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if record.len() < 2 {
            continue;
        }
        if let Ok(v) = record[1].trim().parse::<f64>() {
            values.insert(record[0].trim().to_string(), v);
        }
    }
    Ok(values)
}

fn parse_raw_log(
    path: &Path,
    sidecar: Option<&Path>,
    advertiser: Option<&str>,
) -> Result<ParsedImpressions, DataError> {
    let values = sidecar.map(read_sidecar).transpose()?;
    let file = File::open(path).map_err(io_err(path))?;
    let mut tally = Tally::new(path);
    let mut impressions = Vec::new();

    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        tally.rows += 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != RAW_COLUMNS && fields.len() != RAW_COLUMNS + 1 {
            tally.reject(RowError::Malformed(format!(
                "expected {RAW_COLUMNS} columns, found {}",
                fields.len()
            )));
            continue;
        }
        if let Some(wanted) = advertiser {
            if fields[RAW_ADVERTISER].trim() != wanted {
                tally.filtered += 1;
                continue;
            }
        }
        let price = match parse_amount(fields[RAW_PAYING_PRICE], "paying price") {
            Ok(p) => p,
            Err(e) => {
                tally.reject(e);
                continue;
            }
        };
        let value = if fields.len() > RAW_COLUMNS {
            parse_amount(fields[RAW_COLUMNS], "value")
        } else {
            values
                .as_ref()
                .and_then(|m| m.get(fields[RAW_BID_ID].trim()).copied())
                .ok_or(RowError::Missing)
        };
        match value {
            Ok(value) => impressions.push(Impression::new(tally.rows as u64 - 1, value, price)),
            Err(e) => tally.reject(e),
        }
    }
    tally.finish(impressions)
}

#[derive(Serialize)]
struct ProcessedRow {
    id: u64,
    value: f64,
    paying_price: f64,
    clicked: Option<u8>,
}

pub fn write_processed<W: Write>(ads: &[Impression], writer: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for ad in ads {
        out.serialize(ProcessedRow {
            id: ad.id,
            value: ad.value,
            paying_price: ad.paying_price,
            clicked: ad.clicked.map(u8::from),
        })?;
    }
    if ads.is_empty() {
        out.write_record(PROCESSED_HEADER)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_processed_file(ads: &[Impression], path: &Path) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_processed(ads, std::io::BufWriter::new(file)).map_err(|source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Budgets and summaries
// ---------------------------------------------------------------------------

/// Budget fraction `num/den`, kept exact for labels. A zero fraction is
/// allowed and yields an empty budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fraction {
    pub num: u32,
    pub den: u32,
}

impl Fraction {
    pub fn new(num: u32, den: u32) -> Result<Self, DataError> {
        if den == 0 || num > den {
            return Err(DataError::InvalidSpec(format!(
                "budget fraction must lie in [0, 1], got {num}/{den}"
            )));
        }
        Ok(Self { num, den })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// The four fractions of the reference protocol: 1/2, 1/4, 1/8, 1/16.
    pub fn protocol() -> Vec<Fraction> {
        [2, 4, 8, 16].into_iter().map(|den| Fraction { num: 1, den }).collect()
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Fraction {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DataError::InvalidSpec(format!("cannot parse budget fraction `{s}`"));
        let (num, den) = match s.trim().split_once('/') {
            Some((n, d)) => (n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?),
            None => (s.trim().parse().map_err(|_| bad())?, 1),
        };
        Fraction::new(num, den)
    }
}

/// `fraction` of what was historically spent on the dataset.
pub fn budget_fraction(ads: &[Impression], fraction: Fraction) -> Budget {
    let total: f64 = ads.iter().map(|ad| ad.paying_price).sum();
    Budget::new(total * fraction.num as f64 / fraction.den as f64).unwrap_or_else(|_| Budget::zero())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub impressions: usize,
    pub clicks: usize,
    pub total_cost: f64,
    pub total_value: f64,
    pub ctr: f64,
    /// Cost per click; undefined without clicks.
    pub ecpc: Option<f64>,
}

pub fn summarize(ads: &[Impression]) -> DatasetSummary {
    let impressions = ads.len();
    let clicks = ads.iter().filter(|ad| ad.clicked == Some(true)).count();
    let total_cost: f64 = ads.iter().map(|ad| ad.paying_price).sum();
    let total_value: f64 = ads.iter().map(|ad| ad.value).sum();
    DatasetSummary {
        impressions,
        clicks,
        total_cost,
        total_value,
        ctr: if impressions > 0 { clicks as f64 / impressions as f64 } else { 0.0 },
        ecpc: (clicks > 0).then(|| total_cost / clicks as f64),
    }
}
