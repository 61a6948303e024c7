//! Adaptive pacing baseline.
//!
//! Bids `v / (1 + μ)` and moves μ by projected dual descent on the per-round
//! spend target: `μ ← clamp(μ - step · (B/N - paid), 0, μ_cap)`.

use rand::RngCore;

use super::{BidContext, BidPolicy, PolicyError};
use crate::knapsack::Budget;
use crate::simulator::AuctionOutcome;

pub const DEFAULT_MU_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptivePacingPolicy {
    mu: f64,
    step: f64,
    target_rate: f64,
    mu_cap: f64,
}

impl AdaptivePacingPolicy {
    pub fn new(target_rate: f64, step: f64) -> Result<Self, PolicyError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(PolicyError::InvalidParameter(format!(
                "pacing step must be positive, got {step}"
            )));
        }
        if !(target_rate >= 0.0 && target_rate.is_finite()) {
            return Err(PolicyError::InvalidParameter(format!(
                "pacing target rate must be non-negative, got {target_rate}"
            )));
        }
        Ok(Self {
            mu: 0.0,
            step,
            target_rate,
            mu_cap: DEFAULT_MU_CAP,
        })
    }

    /// Target rate `B / N` and step `1 / √N`.
    pub fn for_horizon(budget: Budget, horizon: usize) -> Result<Self, PolicyError> {
        let n = horizon.max(1) as f64;
        Self::new(budget.total() / n, 1.0 / n.sqrt())
    }

    pub fn with_step(mut self, step: f64) -> Result<Self, PolicyError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(PolicyError::InvalidParameter(format!(
                "pacing step must be positive, got {step}"
            )));
        }
        self.step = step;
        Ok(self)
    }

    pub fn with_mu_cap(mut self, mu_cap: f64) -> Self {
        self.mu_cap = mu_cap;
        self.mu = self.mu.min(mu_cap);
        self
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn target_rate(&self) -> f64 {
        self.target_rate
    }

    pub fn bid_amount(&self, ctx: &BidContext<'_>) -> f64 {
        (ctx.value / (1.0 + self.mu))
            .min(ctx.remaining_budget)
            .max(0.0)
    }

    pub fn update(&mut self, paid: f64) {
        self.mu = (self.mu - self.step * (self.target_rate - paid)).clamp(0.0, self.mu_cap);
    }
}

impl BidPolicy for AdaptivePacingPolicy {
    fn name(&self) -> &str {
        "pacing"
    }

    fn bid(&mut self, ctx: &BidContext<'_>, _rng: &mut dyn RngCore) -> Result<f64, PolicyError> {
        Ok(self.bid_amount(ctx))
    }

    fn observe(&mut self, _ctx: &BidContext<'_>, outcome: &AuctionOutcome) {
        self.update(outcome.paid);
    }

    fn learned_lambda(&self) -> Option<f64> {
        Some(1.0 + self.mu)
    }
}
