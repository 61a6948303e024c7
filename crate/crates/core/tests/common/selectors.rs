//! Monotone selection rules and the experiments run on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spknap::simulator::{simulate, SimulationOptions};
use spknap::strategies::{
    adapt_probabilistic, BidContext, Bracket, DeterministicAdapterPolicy, DeterministicSelector,
    HistoryRecord, ProbabilisticSelector,
};
use spknap::{Budget, Impression};

/// Increasing piecewise-linear function of the price, shifted down by a
/// multiple of the ad value, plus the budget constraint.
#[derive(Clone)]
pub struct PiecewiseSelector {
    knots: Vec<(f64, f64)>,
    value_weight: f64,
}

impl PiecewiseSelector {
    /// Knots start at (0, y0 <= 0) and rise strictly; the root lies below
    /// `root_cap` for every value in `[0, 1)` so the bracket always contains it.
    pub fn random(rng: &mut impl Rng, root_cap: f64) -> Self {
        let k = rng.random_range(1..6);
        let mut x = 0.0;
        let mut y = -rng.random_range(0.0..1.0);
        let mut knots = vec![(x, y)];
        for _ in 0..k {
            x += rng.random_range(0.01..root_cap / 6.0);
            y += rng.random_range(0.01..2.0);
            knots.push((x, y));
        }
        // Make sure the function has crossed zero by the last knot, even after
        // the value shift.
        let value_weight = rng.random_range(0.0..0.5);
        let last = knots.last().copied().unwrap();
        if last.1 <= value_weight {
            knots.push((last.0 + root_cap / 6.0, value_weight + 1.0));
        }
        Self { knots, value_weight }
    }

    fn h(&self, price: f64) -> f64 {
        let n = self.knots.len();
        let seg = self.knots.partition_point(|&(x, _)| x <= price).clamp(1, n - 1);
        let (x0, y0) = self.knots[seg - 1];
        let (x1, y1) = self.knots[seg];
        y0 + (price - x0) * ((y1 - y0) / (x1 - x0))
    }
}

impl DeterministicSelector for PiecewiseSelector {
    fn g(&self, ctx: &BidContext<'_>, price: f64) -> f64 {
        (self.h(price) - self.value_weight * ctx.value).max(price - ctx.remaining_budget)
    }
}

/// Ads the rule takes when it is told each price up front.
fn offline_selection(selector: &PiecewiseSelector, stream: &[Impression], budget: f64) -> Vec<u64> {
    let mut remaining = budget;
    let mut history = Vec::new();
    let mut taken = Vec::new();
    for (k, ad) in stream.iter().enumerate() {
        let ctx = BidContext::new(ad.value, remaining, k + 1, stream.len(), &history);
        let take = selector.g(&ctx, ad.paying_price) <= 0.0;
        if take {
            remaining -= ad.paying_price;
            taken.push(ad.id);
        }
        history.push(HistoryRecord {
            value: ad.value,
            paying_price: take.then_some(ad.paying_price),
            won: take,
            paid: if take { ad.paying_price } else { 0.0 },
        });
    }
    taken
}

/// Runs one random instance; returns whether the won set equals the offline
/// selection, and whether the remaining budget stayed non-negative at every
/// step of the trace.
pub fn realized_matches_offline(seed: u64) -> (bool, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..40);
    let stream: Vec<Impression> = (0..n)
        .map(|i| Impression::new(i, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
        .collect();
    let budget = rng.random_range(0.0..(n as f64 / 2.0));
    let selector = PiecewiseSelector::random(&mut rng, 3.0);
    let offline = offline_selection(&selector, &stream, budget);

    let mut policy = DeterministicAdapterPolicy::new(selector, 1.0);
    let options = SimulationOptions {
        keep_trace: true,
        ..Default::default()
    };
    let result = simulate(&mut policy, &stream, Budget::new(budget).unwrap(), seed, options).unwrap();
    let trace = result.trace.unwrap();
    let feasible = trace.iter().all(|row| row.remaining_budget >= 0.0);
    let won: Vec<u64> = trace
        .iter()
        .filter(|row| row.won)
        .map(|row| stream[row.step - 1].id)
        .collect();
    (won == offline, feasible)
}

/// Take the ad with probability `p(b) = clamp(1 - b / scale, 0, 1)^shape`.
pub struct PowerSelector {
    pub scale: f64,
    pub shape: f64,
}

impl ProbabilisticSelector for PowerSelector {
    fn p(&self, _ctx: &BidContext<'_>, price: f64) -> f64 {
        (1.0 - price / self.scale).clamp(0.0, 1.0).powf(self.shape)
    }
}

impl PowerSelector {
    /// Price at which `p` equals `target`.
    pub fn price_for(&self, target: f64) -> f64 {
        self.scale * (1.0 - target.powf(1.0 / self.shape))
    }
}

/// Win rate over `trials` independent draws against a fixed paying price.
pub fn empirical_win_rate(scale: f64, shape: f64, target: f64, trials: usize, seed: u64) -> (f64, f64) {
    let selector = PowerSelector { scale, shape };
    let price = selector.price_for(target);
    let ctx = BidContext::new(1.0, 2.0 * scale, 1, 1, &[]);
    let expected = selector.p(&ctx, price);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wins = (0..trials)
        .filter(|_| {
            let u: f64 = rng.random();
            adapt_probabilistic(&selector, &ctx, u, Bracket { cap: 2.0 * scale }).unwrap() >= price
        })
        .count();
    (wins as f64 / trials as f64, expected)
}

/// Twenty (selector, price) configurations with `p(b_t)` cycling through
/// 0.1, 0.2, ..., 0.9.
pub fn calibration_configs() -> Vec<(f64, f64, f64)> {
    (0..20)
        .map(|k| {
            let target = ((k % 9) + 1) as f64 / 10.0;
            let shape = [0.5, 1.0, 2.0, 3.0][k % 4];
            (1.0 + k as f64, shape, target)
        })
        .collect()
}

