//! CSV and markdown renderings of experiment reports.
//!
//! CSV cells use Rust's shortest round-trip float formatting, so the same
//! numbers always produce the same bytes. Markdown is rounded for reading.

use std::fmt::Write as _;

use crate::experiment::{BenchmarkRow, CellResult, CompareRow, RunSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(header).expect("writing to memory");
    for row in rows {
        out.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(out.into_inner().expect("flushing to memory")).expect("csv output is utf-8")
}

fn to_markdown(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}|", header.iter().map(|_| "---").collect::<Vec<_>>().join("|"));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out
}

const BENCHMARK_HEADER: [&str; 9] = [
    "dataset",
    "fraction",
    "budget",
    "optimal_value",
    "value_pct",
    "optimal_clicks",
    "clicks_pct",
    "lambda_star",
    "spend",
];

pub fn benchmark_csv(rows: &[BenchmarkRow]) -> String {
    to_csv(
        &BENCHMARK_HEADER,
        rows.iter().map(|r| {
            vec![
                r.dataset.clone(),
                r.fraction.to_string(),
                r.budget.to_string(),
                r.optimal_value.to_string(),
                r.value_pct.to_string(),
                r.optimal_clicks.to_string(),
                r.clicks_pct.to_string(),
                r.lambda_star.to_string(),
                r.spend.to_string(),
            ]
        }),
    )
}

pub fn benchmark_markdown(rows: &[BenchmarkRow]) -> String {
    to_markdown(
        &["Dataset", "Budget", "eKPI", "% of total eKPI", "Clicks", "% of total clicks", "λ*"],
        rows.iter().map(|r| {
            vec![
                r.dataset.clone(),
                r.fraction.to_string(),
                format!("{:.4}", r.optimal_value),
                format!("{:.2}%", r.value_pct),
                r.optimal_clicks.to_string(),
                format!("{:.2}%", r.clicks_pct),
                format!("{:.6}", r.lambda_star),
            ]
        }),
    )
}

const CELL_HEADER: [&str; 14] = [
    "dataset",
    "fraction",
    "strategy",
    "seed",
    "budget",
    "value",
    "value_pct",
    "clicks",
    "clicks_pct",
    "spend",
    "lambda_hat",
    "lambda_star",
    "feasible",
    "exceeds_benchmark",
];

pub fn cells_csv(cells: &[CellResult]) -> String {
    to_csv(
        &CELL_HEADER,
        cells.iter().map(|c| {
            vec![
                c.dataset.clone(),
                c.fraction.to_string(),
                c.strategy.clone(),
                c.seed.to_string(),
                c.budget.to_string(),
                c.value.to_string(),
                c.value_pct.to_string(),
                c.clicks.to_string(),
                c.clicks_pct.to_string(),
                c.spend.to_string(),
                opt(c.lambda_hat),
                c.lambda_star.to_string(),
                flag(c.feasible).into(),
                flag(c.exceeds_benchmark).into(),
            ]
        }),
    )
}

pub fn cells_markdown(cells: &[CellResult]) -> String {
    to_markdown(
        &["Dataset", "Budget", "Strategy", "Seed", "Value", "% of optimal", "Clicks", "% of optimal clicks", "λ̂", "λ*"],
        cells.iter().map(|c| {
            vec![
                c.dataset.clone(),
                c.fraction.to_string(),
                c.strategy.clone(),
                c.seed.to_string(),
                format!("{:.4}", c.value),
                pct_cell(c.value_pct, c.exceeds_benchmark),
                c.clicks.to_string(),
                format!("{:.2}%", c.clicks_pct),
                c.lambda_hat.map(|l| format!("{l:.6}")).unwrap_or_default(),
                format!("{:.6}", c.lambda_star),
            ]
        }),
    )
}

/// Percent with a marker when the integral benchmark was exceeded.
fn pct_cell(pct: f64, exceeds: bool) -> String {
    if exceeds {
        format!("{pct:.2}% (>100)")
    } else {
        format!("{pct:.2}%")
    }
}

const SUMMARY_HEADER: [&str; 16] = [
    "dataset",
    "fraction",
    "strategy",
    "seeds",
    "value_mean",
    "value_std",
    "value_pct_mean",
    "value_pct_std",
    "clicks_mean",
    "clicks_pct_mean",
    "lambda_hat_mean",
    "lambda_star",
    "lambda_ratio",
    "optimal_value",
    "all_feasible",
    "exceeds_benchmark",
];

pub fn summaries_csv(summaries: &[RunSummary]) -> String {
    to_csv(
        &SUMMARY_HEADER,
        summaries.iter().map(|s| {
            vec![
                s.dataset.clone(),
                s.fraction.to_string(),
                s.strategy.clone(),
                s.seeds.to_string(),
                s.value_mean.to_string(),
                s.value_std.to_string(),
                s.value_pct_mean.to_string(),
                s.value_pct_std.to_string(),
                s.clicks_mean.to_string(),
                s.clicks_pct_mean.to_string(),
                opt(s.lambda_hat_mean),
                s.lambda_star.to_string(),
                opt(s.lambda_ratio()),
                s.optimal_value.to_string(),
                flag(s.all_feasible).into(),
                flag(s.exceeds_benchmark).into(),
            ]
        }),
    )
}

pub fn summaries_markdown(summaries: &[RunSummary]) -> String {
    to_markdown(
        &["Dataset", "Budget", "Strategy", "Value", "% of optimal (mean ± std)", "Clicks", "% of optimal clicks", "λ̂", "λ*", "λ̂/λ*"],
        summaries.iter().map(|s| {
            vec![
                s.dataset.clone(),
                s.fraction.to_string(),
                s.strategy.clone(),
                format!("{:.4}", s.value_mean),
                format!("{} ± {:.2}", pct_cell(s.value_pct_mean, s.exceeds_benchmark), s.value_pct_std),
                format!("{:.1}", s.clicks_mean),
                format!("{:.2}%", s.clicks_pct_mean),
                s.lambda_hat_mean.map(|l| format!("{l:.6}")).unwrap_or_default(),
                format!("{:.6}", s.lambda_star),
                s.lambda_ratio().map(|r| format!("{r:.3}")).unwrap_or_default(),
            ]
        }),
    )
}

const COMPARE_HEADER: [&str; 8] = [
    "dataset",
    "fraction",
    "strategy",
    "baseline",
    "value_mean",
    "value_pct_mean",
    "baseline_value_mean",
    "ratio_pct",
];

pub fn compare_csv(rows: &[CompareRow]) -> String {
    to_csv(
        &COMPARE_HEADER,
        rows.iter().map(|r| {
            vec![
                r.dataset.clone(),
                r.fraction.to_string(),
                r.strategy.clone(),
                r.baseline.clone(),
                r.value_mean.to_string(),
                r.value_pct_mean.to_string(),
                r.baseline_value_mean.to_string(),
                opt(r.ratio_pct),
            ]
        }),
    )
}

pub fn compare_markdown(rows: &[CompareRow]) -> String {
    to_markdown(
        &["Dataset", "Budget", "Strategy", "% of optimal", "Ratio vs baseline"],
        rows.iter().map(|r| {
            vec![
                r.dataset.clone(),
                r.fraction.to_string(),
                r.strategy.clone(),
                format!("{:.2}%", r.value_pct_mean),
                r.ratio_pct
                    .map(|p| format!("{p:.2}% of {}", r.baseline))
                    .unwrap_or_else(|| "undefined".into()),
            ]
        }),
    )
}
