//! Second-price auctions and the sequential replay loop.
//!
//! Logged paying prices are replayed directly: under second-price rules the
//! highest competing bid (or the floor) is all that decides the outcome and
//! the amount paid.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::knapsack::{solve_fractional, Budget, Impression, TOLERANCE};
use crate::strategies::{BidContext, BidPolicy, HistoryRecord, PolicyError};

/// ChaCha stream used by [`permute_stream`].
const PERMUTATION_STREAM: u64 = 0;
/// ChaCha stream handed to policies by [`simulate`].
const POLICY_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuctionOutcome {
    pub won: bool,
    pub paid: f64,
    pub value_collected: f64,
    pub clicked: Option<bool>,
}

/// Win iff `bid >= paying_price`; the winner pays the paying price.
pub fn run_auction(bid: f64, impression: &Impression) -> AuctionOutcome {
    if bid >= impression.paying_price {
        AuctionOutcome {
            won: true,
            paid: impression.paying_price,
            value_collected: impression.value,
            clicked: impression.clicked,
        }
    } else {
        AuctionOutcome {
            won: false,
            paid: 0.0,
            value_collected: 0.0,
            clicked: None,
        }
    }
}

/// Seeded generator for one of the simulator's independent streams.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniformly random arrival order (Fisher–Yates). Value and price travel
/// together.
pub fn permute_stream(ads: &[Impression], seed: u64) -> Vec<Impression> {
    let mut stream = ads.to_vec();
    stream.shuffle(&mut seeded_rng(seed, PERMUTATION_STREAM));
    stream
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("policy failed at step {step}: {source}")]
    Policy { step: usize, source: PolicyError },
    #[error("policy returned an invalid bid {bid} at step {step}")]
    InvalidBid { step: usize, bid: f64 },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimulationOptions {
    /// Put the paying price of lost auctions into the history. Policies that
    /// require price feedback get it either way.
    pub reveal_losing_price: bool,
    /// Keep a per-step trace in the result.
    pub keep_trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub value: f64,
    pub paying_price: f64,
    pub bid: f64,
    pub won: bool,
    pub paid: f64,
    pub remaining_budget: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub total_value: f64,
    pub total_spend: f64,
    pub wins: usize,
    pub clicks: usize,
    pub budget: f64,
    /// Lowest remaining budget seen after any step.
    pub min_remaining: f64,
    pub learned_lambda: Option<f64>,
    pub trace: Option<Vec<TraceRow>>,
    pub seed: u64,
}

impl SimulationResult {
    pub fn is_feasible(&self) -> bool {
        self.min_remaining >= 0.0 && self.total_spend <= self.budget + TOLERANCE * self.budget.max(1.0)
    }
}

/// Replays `stream` against `policy`.
///
/// Bids are clamped to the remaining budget before the auction, so the budget
/// can never go negative whatever the policy does.
pub fn simulate(
    policy: &mut dyn BidPolicy,
    stream: &[Impression],
    budget: Budget,
    seed: u64,
    options: SimulationOptions,
) -> Result<SimulationResult, SimulationError> {
    let mut rng = seeded_rng(seed, POLICY_STREAM);
    let reveal = options.reveal_losing_price || policy.requires_price_feedback();
    let horizon = stream.len();
    let mut remaining = budget.total();
    let mut history: Vec<HistoryRecord> = Vec::with_capacity(horizon);
    let mut trace = options.keep_trace.then(|| Vec::with_capacity(horizon));
    let mut result = SimulationResult {
        total_value: 0.0,
        total_spend: 0.0,
        wins: 0,
        clicks: 0,
        budget: budget.total(),
        min_remaining: remaining,
        learned_lambda: None,
        trace: None,
        seed,
    };

    for (k, impression) in stream.iter().enumerate() {
        let step = k + 1;
        let ctx = BidContext::new(impression.value, remaining, step, horizon, &history);
        let raw = policy
            .bid(&ctx, &mut rng)
            .map_err(|source| SimulationError::Policy { step, source })?;
        if raw.is_nan() || raw < 0.0 {
            return Err(SimulationError::InvalidBid { step, bid: raw });
        }
        let bid = raw.min(remaining);
        let outcome = run_auction(bid, impression);
        policy.observe(&ctx, &outcome);

        if outcome.won {
            remaining -= outcome.paid;
            result.total_spend += outcome.paid;
            result.total_value += outcome.value_collected;
            result.wins += 1;
            if outcome.clicked == Some(true) {
                result.clicks += 1;
            }
        }
        result.min_remaining = result.min_remaining.min(remaining);
        if let Some(rows) = trace.as_mut() {
            rows.push(TraceRow {
                step,
                value: impression.value,
                paying_price: impression.paying_price,
                bid,
                won: outcome.won,
                paid: outcome.paid,
                remaining_budget: remaining,
            });
        }
        history.push(HistoryRecord {
            value: impression.value,
            paying_price: (outcome.won || reveal)
                .then_some(impression.paying_price),
            won: outcome.won,
            paid: outcome.paid,
        });
    }

    result.learned_lambda = policy.learned_lambda();
    result.trace = trace;
    Ok(result)
}

/// Writes a trace as CSV with header
/// `step,value,paying_price,bid,won,paid,remaining_budget`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], writer: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for row in rows {
        out.serialize(TraceCsvRow::from(row))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceCsvRow {
    step: usize,
    value: f64,
    paying_price: f64,
    bid: f64,
    won: u8,
    paid: f64,
    remaining_budget: f64,
}

impl From<&TraceRow> for TraceCsvRow {
    fn from(row: &TraceRow) -> Self {
        Self {
            step: row.step,
            value: row.value,
            paying_price: row.paying_price,
            bid: row.bid,
            won: row.won as u8,
            paid: row.paid,
            remaining_budget: row.remaining_budget,
        }
    }
}

/// Hindsight-optimal integral bundle: every ad the fractional solution buys in
/// full. The marginal ad is left out, which costs at most `v_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OfflineBenchmark {
    pub optimal_value: f64,
    pub lambda_star: f64,
    pub optimal_clicks: usize,
    pub spend: f64,
}

pub fn offline_benchmark(ads: &[Impression], budget: Budget) -> OfflineBenchmark {
    let lp = solve_fractional(ads, budget);
    let mut bench = OfflineBenchmark {
        optimal_value: 0.0,
        lambda_star: lp.lambda_star,
        optimal_clicks: 0,
        spend: 0.0,
    };
    for ad in ads {
        if lp.fraction(ad.id) >= 1.0 {
            bench.optimal_value += ad.value;
            bench.spend += ad.paying_price;
            if ad.clicked == Some(true) {
                bench.optimal_clicks += 1;
            }
        }
    }
    bench
}
