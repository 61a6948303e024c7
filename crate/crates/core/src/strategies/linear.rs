use rand::RngCore;

use super::{BidContext, BidPolicy, DeterministicSelector, PolicyError};

/// Bids `value / lambda`. Under second-price rules this wins exactly the ads
/// whose value-to-price ratio is at least `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBidPolicy {
    lambda: f64,
}

impl LinearBidPolicy {
    pub fn new(lambda: f64) -> Result<Self, PolicyError> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Self { lambda })
        } else {
            Err(PolicyError::InvalidParameter(format!(
                "linear bid needs a positive finite lambda, got {lambda}"
            )))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

pub fn linear_bid(policy: &LinearBidPolicy, ctx: &BidContext<'_>) -> f64 {
    (ctx.value / policy.lambda)
        .min(ctx.remaining_budget)
        .max(0.0)
}

impl BidPolicy for LinearBidPolicy {
    fn name(&self) -> &str {
        "linear"
    }

    fn bid(&mut self, ctx: &BidContext<'_>, _rng: &mut dyn RngCore) -> Result<f64, PolicyError> {
        Ok(linear_bid(self, ctx))
    }

    fn learned_lambda(&self) -> Option<f64> {
        Some(self.lambda)
    }
}

/// Select iff `lambda * b <= v` and `b <= B_t`.
impl DeterministicSelector for LinearBidPolicy {
    fn g(&self, ctx: &BidContext<'_>, price: f64) -> f64 {
        (self.lambda * price - ctx.value).max(price - ctx.remaining_budget)
    }

    fn closed_form(&self, ctx: &BidContext<'_>) -> Option<f64> {
        Some(linear_bid(self, ctx))
    }
}
