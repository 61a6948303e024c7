//! Primal randomized policy.
//!
//! At arrival t the policy solves the fractional knapsack over every ad seen so
//! far plus the current one, with the budget scaled to `(t / N) · B`. The
//! fraction `x(b)` assigned to the current ad, as a function of its unknown
//! price `b`, is non-increasing; drawing `u ~ U[0,1]` and bidding
//! `min(B_t, sup{b : x(b) >= 1 - u})` wins the ad with probability `x(b_t)`.
//!
//! Past ads are kept sorted by ratio with prefix sums of their prices, so
//! each probe of `x(b)` costs one binary search instead of a full solve.
//! [`PrimalRandomizedPolicy::x_tilde_reference`] runs the full solve and is
//! kept for cross-checking.

use rand::{Rng, RngCore};

use super::adapters::bisect_sup;
use super::{BidContext, BidPolicy, HistoryRecord, PolicyError};
use crate::knapsack::{solve_fractional, Budget, Impression, TOLERANCE};

#[derive(Debug, Clone)]
pub struct PrimalRandomizedPolicy {
    budget: f64,
    b_max_hint: f64,
    /// Observed ads with known prices, in arrival order.
    observed: Vec<Impression>,
    /// `(ratio, price)` of observed ads, ratio descending, stable in arrival order.
    ranked: Vec<(f64, f64)>,
    /// `prefix[k]` = total price of the first `k` entries of `ranked`.
    prefix: Vec<f64>,
    ingested: usize,
    max_price: f64,
}

impl PrimalRandomizedPolicy {
    pub fn new(budget: Budget) -> Self {
        Self {
            budget: budget.total(),
            b_max_hint: 0.0,
            observed: Vec::new(),
            ranked: Vec::new(),
            prefix: vec![0.0],
            ingested: 0,
            max_price: 0.0,
        }
    }

    /// Lower bound for the bid bracket before any price has been observed.
    pub fn with_b_max_hint(mut self, b_max: f64) -> Self {
        self.b_max_hint = b_max;
        self
    }

    pub fn observed(&self) -> &[Impression] {
        &self.observed
    }

    /// Adds history records not yet seen. Records without a known price are
    /// skipped.
    pub fn ingest(&mut self, history: &[HistoryRecord]) {
        for (k, record) in history.iter().enumerate().skip(self.ingested) {
            if let Some(price) = record.paying_price {
                self.insert(Impression::new(k as u64 + 1, record.value, price));
            }
        }
        self.ingested = self.ingested.max(history.len());
    }

    fn insert(&mut self, ad: Impression) {
        let ratio = ad.ratio();
        let pos = self.ranked.partition_point(|&(r, _)| r >= ratio);
        self.ranked.insert(pos, (ratio, ad.paying_price));
        self.prefix.truncate(pos + 1);
        let mut acc = self.prefix[pos];
        for &(_, price) in &self.ranked[pos..] {
            acc += price;
            self.prefix.push(acc);
        }
        self.max_price = self.max_price.max(ad.paying_price);
        self.observed.push(ad);
    }

    fn scaled_budget(&self, ctx: &BidContext<'_>) -> f64 {
        self.budget * ctx.time_index as f64 / ctx.horizon as f64
    }

    /// Fraction of the current ad in the scaled fractional solution if its
    /// price were `price`. Assumes the history has been ingested.
    pub fn x_tilde(&self, ctx: &BidContext<'_>, price: f64) -> f64 {
        if price <= 0.0 {
            return 1.0;
        }
        let ratio = ctx.value / price;
        // Earlier arrivals win ratio ties, so every past ad with ratio >= ours
        // is filled first.
        let ahead = self.ranked.partition_point(|&(r, _)| r >= ratio);
        let left = self.scaled_budget(ctx) - self.prefix[ahead];
        if left < -TOLERANCE {
            0.0
        } else if price <= left + TOLERANCE {
            1.0
        } else {
            (left.max(0.0) / price).clamp(0.0, 1.0)
        }
    }

    /// [`Self::x_tilde`] computed by a full fractional solve.
    pub fn x_tilde_reference(&self, ctx: &BidContext<'_>, price: f64) -> f64 {
        let current_id = ctx.time_index as u64;
        let mut ads = self.observed.clone();
        ads.push(Impression::new(current_id, ctx.value, price));
        let budget = Budget::new(self.scaled_budget(ctx)).unwrap_or_else(|_| Budget::zero());
        solve_fractional(&ads, budget).fraction(current_id)
    }

    /// Bid for the current ad given the uniform draw `u`.
    pub fn step(&mut self, ctx: &BidContext<'_>, uniform_draw: f64) -> f64 {
        self.ingest(ctx.history);
        if ctx.remaining_budget <= 0.0 {
            return 0.0;
        }
        let target = 1.0 - uniform_draw;
        let cap = ctx
            .remaining_budget
            .max(10.0 * self.max_price.max(self.b_max_hint));
        if target <= 0.0 || self.x_tilde(ctx, cap) >= target {
            return ctx.remaining_budget;
        }
        let sup = bisect_sup(0.0, cap, |b| self.x_tilde(ctx, b) >= target);
        sup.min(ctx.remaining_budget)
    }
}

impl BidPolicy for PrimalRandomizedPolicy {
    fn name(&self) -> &str {
        "primal"
    }

    fn bid(&mut self, ctx: &BidContext<'_>, rng: &mut dyn RngCore) -> Result<f64, PolicyError> {
        let u: f64 = rng.random();
        Ok(self.step(ctx, u))
    }

    fn requires_price_feedback(&self) -> bool {
        true
    }
}
