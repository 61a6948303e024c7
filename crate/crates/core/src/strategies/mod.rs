//! Bidding policies.
//!
//! Every policy sees the same [`BidContext`]: the value of the current ad, the
//! remaining budget, the position in the stream and what happened before. The
//! paying price of the current ad is never part of the context.

use rand::RngCore;
use thiserror::Error;

use crate::simulator::AuctionOutcome;

mod adapters;
mod linear;
mod osla;
mod pacing;
mod primal;

pub use adapters::{
    adapt_deterministic, adapt_probabilistic, Bracket, DeterministicAdapterPolicy,
    DeterministicSelector, ProbabilisticAdapterPolicy, ProbabilisticSelector,
    MAX_BISECTION_STEPS,
};
pub use linear::{linear_bid, LinearBidPolicy};
pub use osla::{osla_min_budget, OslaFeasibility, OslaPhase, OslaPolicy};
pub use pacing::{AdaptivePacingPolicy, DEFAULT_MU_CAP};
pub use primal::PrimalRandomizedPolicy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("selector contract violated: {0}")]
    SelectorContract(String),
    #[error("invalid policy parameter: {0}")]
    InvalidParameter(String),
}

/// One past auction as seen by the bidder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub value: f64,
    /// Known when the auction was won, or when losing prices are revealed.
    pub paying_price: Option<f64>,
    pub won: bool,
    pub paid: f64,
}

/// Everything a policy may look at when bidding on ad `time_index`.
#[derive(Debug, Clone, Copy)]
pub struct BidContext<'a> {
    pub value: f64,
    pub remaining_budget: f64,
    /// 1-based.
    pub time_index: usize,
    pub horizon: usize,
    /// Exactly `time_index - 1` records.
    pub history: &'a [HistoryRecord],
}

impl<'a> BidContext<'a> {
    pub fn new(
        value: f64,
        remaining_budget: f64,
        time_index: usize,
        horizon: usize,
        history: &'a [HistoryRecord],
    ) -> Self {
        debug_assert!(remaining_budget >= 0.0);
        debug_assert!(time_index >= 1 && time_index <= horizon);
        debug_assert_eq!(history.len(), time_index - 1);
        Self {
            value,
            remaining_budget,
            time_index,
            horizon,
            history,
        }
    }

    /// Largest paying price revealed so far.
    pub fn max_observed_price(&self) -> f64 {
        self.history
            .iter()
            .filter_map(|r| r.paying_price)
            .fold(0.0, f64::max)
    }
}

/// A stateful bidding strategy driven by the simulator.
pub trait BidPolicy: Send {
    fn name(&self) -> &str;

    fn bid(&mut self, ctx: &BidContext<'_>, rng: &mut dyn RngCore) -> Result<f64, PolicyError>;

    /// Called once per auction with its outcome.
    fn observe(&mut self, _ctx: &BidContext<'_>, _outcome: &AuctionOutcome) {}

    /// Whether the policy is defined on a history that includes the paying
    /// price of every past auction, lost ones included. The simulator reveals
    /// losing prices to such policies regardless of its own setting.
    fn requires_price_feedback(&self) -> bool {
        false
    }

    /// The dual threshold the policy is currently bidding with, if it learns one.
    fn learned_lambda(&self) -> Option<f64> {
        None
    }
}

/// Never bids.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroBidPolicy;

impl BidPolicy for ZeroBidPolicy {
    fn name(&self) -> &str {
        "zero"
    }

    fn bid(&mut self, _ctx: &BidContext<'_>, _rng: &mut dyn RngCore) -> Result<f64, PolicyError> {
        Ok(0.0)
    }
}

/// Bids the whole remaining budget on every ad.
#[derive(Debug, Clone, Copy, Default)]
pub struct BidBudgetPolicy;

impl BidPolicy for BidBudgetPolicy {
    fn name(&self) -> &str {
        "bid-budget"
    }

    fn bid(&mut self, ctx: &BidContext<'_>, _rng: &mut dyn RngCore) -> Result<f64, PolicyError> {
        Ok(ctx.remaining_budget)
    }
}
