//! One-shot learning: bid the value on the first ε fraction of the stream,
//! fit a dual threshold on what was observed, then bid linearly with it.

use log::warn;
use rand::RngCore;

use super::{BidContext, BidPolicy, PolicyError};
use crate::knapsack::{solve_fractional, Budget, Impression};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OslaPhase {
    Training,
    Bidding,
}

/// Smallest budget for which the one-shot learner carries its worst-case
/// guarantee: `6 * b_max * ln(n / ε) / ε³`.
pub fn osla_min_budget(b_max: f64, n: usize, epsilon: f64) -> f64 {
    6.0 * b_max * (n as f64 / epsilon).ln() / epsilon.powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OslaFeasibility {
    pub required_budget: f64,
    pub budget: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone)]
pub struct OslaPolicy {
    epsilon: f64,
    budget: f64,
    phase: OslaPhase,
    learned_lambda: Option<f64>,
    degenerate: bool,
}

impl OslaPolicy {
    pub fn new(epsilon: f64, budget: Budget) -> Result<Self, PolicyError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(PolicyError::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        Ok(Self {
            epsilon,
            budget: budget.total(),
            phase: OslaPhase::Training,
            learned_lambda: None,
            degenerate: false,
        })
    }

    /// Checks the worst-case budget condition. Violations are only logged:
    /// small ε values work well in practice even when they fail it.
    pub fn check_feasibility(&self, n: usize, b_max: f64) -> OslaFeasibility {
        let required_budget = osla_min_budget(b_max, n, self.epsilon);
        let satisfied = self.budget >= required_budget;
        if !satisfied {
            warn!(
                "epsilon {} is below the one-shot guarantee: budget {} < required {:.3}",
                self.epsilon, self.budget, required_budget
            );
        }
        OslaFeasibility {
            required_budget,
            budget: self.budget,
            satisfied,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn phase(&self) -> OslaPhase {
        self.phase
    }

    /// Budget the trainer may spend while bidding its value.
    pub fn training_budget(&self) -> f64 {
        self.epsilon * self.budget
    }

    /// Budget the threshold is fitted against.
    pub fn fitting_budget(&self) -> f64 {
        (1.0 - self.epsilon) * self.epsilon * self.budget
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    fn in_training(&self, ctx: &BidContext<'_>) -> bool {
        ctx.time_index as f64 <= self.epsilon * ctx.horizon as f64
    }

    /// Fits the threshold on every training record whose price is known.
    fn fit(&mut self, training: &[crate::strategies::HistoryRecord]) {
        let observed: Vec<Impression> = training
            .iter()
            .enumerate()
            .filter_map(|(k, r)| r.paying_price.map(|b| Impression::new(k as u64, r.value, b)))
            .collect();
        self.phase = OslaPhase::Bidding;
        if !observed.iter().any(|ad| ad.paying_price > 0.0) {
            warn!("no priced impression observed during training; bidding 0 from now on");
            self.degenerate = true;
            return;
        }
        let budget = Budget::new(self.fitting_budget()).unwrap_or_else(|_| Budget::zero());
        self.learned_lambda = Some(solve_fractional(&observed, budget).lambda_star);
    }

    pub fn step(&mut self, ctx: &BidContext<'_>) -> f64 {
        if self.phase == OslaPhase::Training && self.in_training(ctx) {
            let spent: f64 = ctx.history.iter().map(|r| r.paid).sum();
            let left = (self.training_budget() - spent).max(0.0);
            return ctx.value.min(left).min(ctx.remaining_budget).max(0.0);
        }
        if self.phase == OslaPhase::Training {
            let end = ctx.history.len().min((self.epsilon * ctx.horizon as f64) as usize);
            self.fit(&ctx.history[..end]);
        }
        match self.learned_lambda {
            _ if self.degenerate || ctx.value <= 0.0 => 0.0,
            Some(lambda) if lambda > 0.0 => (ctx.value / lambda).min(ctx.remaining_budget),
            // A zero threshold means the training set was affordable in full.
            _ => ctx.remaining_budget,
        }
    }
}

impl BidPolicy for OslaPolicy {
    fn name(&self) -> &str {
        "osla"
    }

    fn bid(&mut self, ctx: &BidContext<'_>, _rng: &mut dyn RngCore) -> Result<f64, PolicyError> {
        Ok(self.step(ctx))
    }

    /// Training records the value and paying price of every arrival.
    fn requires_price_feedback(&self) -> bool {
        true
    }

    fn learned_lambda(&self) -> Option<f64> {
        self.learned_lambda
    }
}
