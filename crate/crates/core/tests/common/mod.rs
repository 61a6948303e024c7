//! Reference implementations used as oracles by the integration tests. They
//! share no code with the library solvers.

#![allow(dead_code)]

pub mod selectors;

use rand::Rng;
use spknap::strategies::HistoryRecord;
use spknap::Impression;

/// Best 0/1 value by trying every subset.
pub fn brute_force_ip(ads: &[Impression], budget: f64) -> f64 {
    assert!(ads.len() <= 20, "oracle is exponential");
    let mut best = 0.0_f64;
    for mask in 0_u32..(1 << ads.len()) {
        let mut value = 0.0;
        let mut price = 0.0;
        for (k, ad) in ads.iter().enumerate() {
            if mask >> k & 1 == 1 {
                value += ad.value;
                price += ad.paying_price;
            }
        }
        if price <= budget + 1e-9 {
            best = best.max(value);
        }
    }
    best
}

/// LP optimum through the dual `min_{λ >= 0} λB + Σ max(0, v_i - λ b_i)`.
/// The dual is convex and piecewise linear with kinks at the ratios, so the
/// minimum sits at 0 or at one of them.
pub fn dual_lp(ads: &[Impression], budget: f64) -> f64 {
    let dual = |lambda: f64| -> f64 {
        lambda * budget
            + ads
                .iter()
                .map(|ad| (ad.value - lambda * ad.paying_price).max(0.0))
                .sum::<f64>()
    };
    let mut candidates = vec![0.0];
    candidates.extend(ads.iter().filter(|ad| ad.paying_price > 0.0).map(|ad| ad.value / ad.paying_price));
    candidates.into_iter().map(dual).fold(f64::INFINITY, f64::min)
}

/// Random instance with integer prices in `1..=max_price` and values in
/// `[0, max_value)`.
pub fn integer_instance(rng: &mut impl Rng, max_ads: usize, max_price: u32, max_value: f64) -> Vec<Impression> {
    let n = rng.random_range(1..=max_ads);
    (0..n)
        .map(|i| {
            Impression::new(
                i as u64,
                rng.random_range(0.0..max_value),
                rng.random_range(1..=max_price) as f64,
            )
        })
        .collect()
}

/// Random instance with continuous prices and values; ratios are distinct
/// with probability one.
pub fn continuous_instance(rng: &mut impl Rng, n: usize) -> Vec<Impression> {
    (0..n)
        .map(|i| {
            Impression::new(
                i as u64,
                rng.random_range(0.01..1.0),
                rng.random_range(0.05..1.0),
            )
        })
        .collect()
}

/// Spearman rank correlation: Pearson correlation of the ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    cov / (vx * vy).sqrt()
}

/// A random mid-stream state: history with revealed prices, a current value
/// and a time index.
pub fn random_state(rng: &mut impl Rng) -> (Vec<HistoryRecord>, f64, usize, usize, f64) {
    let horizon = rng.random_range(2..60);
    let t = rng.random_range(1..=horizon);
    let history: Vec<HistoryRecord> = (1..t)
        .map(|_| {
            let price = if rng.random_bool(0.05) { 0.0 } else { rng.random_range(0.05..1.0) };
            HistoryRecord {
                value: rng.random_range(0.0..1.0),
                paying_price: Some(price),
                won: false,
                paid: 0.0,
            }
        })
        .collect();
    let value = rng.random_range(0.01..1.0);
    let budget = rng.random_range(0.1..(horizon as f64 / 3.0));
    (history, value, t, horizon, budget)
}
