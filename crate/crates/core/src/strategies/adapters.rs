//! Turning selection rules that need the paying price into bids that don't.
//!
//! A deterministic rule "take the ad iff g(b) <= 0", with g increasing in the
//! price b, is reproduced exactly by bidding sup{b : g(b) <= 0}: the auction is
//! won iff the paying price is at most the bid.
//!
//! A randomized rule "take the ad with probability p(b)", with p decreasing in
//! b, is reproduced in distribution by drawing u ~ U[0,1] and bidding
//! sup{b : 1 - p(b) <= u}. We use F(0) = 0 at the left end of the domain.

use rand::{Rng, RngCore};

use super::{BidContext, BidPolicy, PolicyError};

/// Upper limit on bisection steps. The search stops earlier once the bracket
/// has collapsed to two adjacent floats, which takes about 60 steps on a
/// unit-scale bracket.
pub const MAX_BISECTION_STEPS: usize = 128;

/// Grid size used to probe probabilistic selectors for monotonicity.
const MONOTONICITY_PROBES: usize = 32;

/// Deterministic selection rule: the ad is taken iff `g(price) <= 0`.
///
/// `g` must be continuous and increasing in `price`, with `g(0) <= 0` and
/// `g > 0` for large enough prices.
pub trait DeterministicSelector {
    fn g(&self, ctx: &BidContext<'_>, price: f64) -> f64;

    /// `sup{b : g(b) <= 0}` when it is known analytically.
    fn closed_form(&self, _ctx: &BidContext<'_>) -> Option<f64> {
        None
    }
}

/// Randomized selection rule: the ad is taken with probability `p(price)`.
///
/// `p` must be right-continuous and decreasing in `price`, tend to 1 as the
/// price goes to 0 and to 0 as it grows.
pub trait ProbabilisticSelector {
    fn p(&self, ctx: &BidContext<'_>, price: f64) -> f64;
}

/// Search interval `[0, cap]` for the bid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub cap: f64,
}

impl Bracket {
    /// `cap = max(B_t, 10 * b_max)`, where `b_max` is the larger of the hint
    /// and the highest price seen in the history.
    pub fn for_context(ctx: &BidContext<'_>, b_max_hint: f64) -> Self {
        let b_max = b_max_hint.max(ctx.max_observed_price());
        Self {
            cap: ctx.remaining_budget.max(10.0 * b_max),
        }
    }
}

/// Largest `b` in `[lo, hi]` with `accept(b)`, given `accept(lo)` and
/// `!accept(hi)`. Returns the accepted end of the final bracket.
pub(crate) fn bisect_sup(mut lo: f64, mut hi: f64, mut accept: impl FnMut(f64) -> bool) -> f64 {
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if accept(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn adapt_deterministic(
    selector: &dyn DeterministicSelector,
    ctx: &BidContext<'_>,
    bracket: Bracket,
) -> Result<f64, PolicyError> {
    if let Some(bid) = selector.closed_form(ctx) {
        return Ok(bid);
    }
    let g0 = selector.g(ctx, 0.0);
    if g0 > 0.0 || g0.is_nan() {
        return Err(PolicyError::SelectorContract(format!(
            "g(0) = {g0} must be <= 0"
        )));
    }
    if bracket.cap <= 0.0 {
        return Ok(0.0);
    }
    let g_cap = selector.g(ctx, bracket.cap);
    if !(g_cap > 0.0) {
        return Err(PolicyError::SelectorContract(format!(
            "no sign change of g in [0, {}]",
            bracket.cap
        )));
    }
    Ok(bisect_sup(0.0, bracket.cap, |b| selector.g(ctx, b) <= 0.0))
}

pub fn adapt_probabilistic(
    selector: &dyn ProbabilisticSelector,
    ctx: &BidContext<'_>,
    uniform_draw: f64,
    bracket: Bracket,
) -> Result<f64, PolicyError> {
    if bracket.cap <= 0.0 {
        return Ok(0.0);
    }
    check_decreasing(selector, ctx, bracket.cap)?;
    let cdf = |b: f64| if b <= 0.0 { 0.0 } else { 1.0 - selector.p(ctx, b) };
    if cdf(bracket.cap) <= uniform_draw {
        return Ok(bracket.cap);
    }
    Ok(bisect_sup(0.0, bracket.cap, |b| cdf(b) <= uniform_draw))
}

fn check_decreasing(
    selector: &dyn ProbabilisticSelector,
    ctx: &BidContext<'_>,
    cap: f64,
) -> Result<(), PolicyError> {
    let mut previous = f64::INFINITY;
    for k in 1..=MONOTONICITY_PROBES {
        let b = cap * k as f64 / MONOTONICITY_PROBES as f64;
        let p = selector.p(ctx, b);
        if !(0.0..=1.0).contains(&p) {
            return Err(PolicyError::SelectorContract(format!(
                "p({b}) = {p} is not a probability"
            )));
        }
        if p > previous + 1e-12 {
            return Err(PolicyError::SelectorContract(format!(
                "p increases from {previous} to {p} at price {b}"
            )));
        }
        previous = p;
    }
    Ok(())
}

/// Bids through [`adapt_deterministic`].
pub struct DeterministicAdapterPolicy<S> {
    selector: S,
    b_max_hint: f64,
    name: String,
}

impl<S: DeterministicSelector> DeterministicAdapterPolicy<S> {
    pub fn new(selector: S, b_max_hint: f64) -> Self {
        Self {
            selector,
            b_max_hint,
            name: "deterministic-adapter".to_string(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl<S: DeterministicSelector + Send> BidPolicy for DeterministicAdapterPolicy<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn bid(&mut self, ctx: &BidContext<'_>, _rng: &mut dyn RngCore) -> Result<f64, PolicyError> {
        adapt_deterministic(&self.selector, ctx, Bracket::for_context(ctx, self.b_max_hint))
    }
}

/// Bids through [`adapt_probabilistic`], drawing `u` from the injected generator.
pub struct ProbabilisticAdapterPolicy<P> {
    selector: P,
    b_max_hint: f64,
    name: String,
}

impl<P: ProbabilisticSelector> ProbabilisticAdapterPolicy<P> {
    pub fn new(selector: P, b_max_hint: f64) -> Self {
        Self {
            selector,
            b_max_hint,
            name: "probabilistic-adapter".to_string(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl<P: ProbabilisticSelector + Send> BidPolicy for ProbabilisticAdapterPolicy<P> {
    fn name(&self) -> &str {
        &self.name
    }

    fn bid(&mut self, ctx: &BidContext<'_>, rng: &mut dyn RngCore) -> Result<f64, PolicyError> {
        let u: f64 = rng.random();
        adapt_probabilistic(&self.selector, ctx, u, Bracket::for_context(ctx, self.b_max_hint))
    }
}
