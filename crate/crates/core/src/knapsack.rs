//! Offline knapsack machinery.
//!
//! Ads are ranked by their value-to-price ratio. The fractional relaxation is
//! solved greedily in that order, which also yields the dual threshold: every
//! ad whose ratio is above the threshold is fully bought, every ad below it is
//! skipped, and at most one (the marginal ad) is bought fractionally.
//!
//! The exact integer solver exists to certify small instances in tests and
//! benchmarks. It is not meant for production-size streams.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for budget and objective comparisons.
pub const TOLERANCE: f64 = 1e-9;

/// Subset enumeration limit for the exact solver when prices are not integral.
pub const MAX_ENUMERATION_ADS: usize = 25;

/// Cell limit (ads × capacity) for the dynamic program over integral prices.
pub const MAX_DP_CELLS: usize = 50_000_000;

pub type AdId = u64;

/// One ad opportunity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impression {
    pub id: AdId,
    /// Estimated value (eKPI) of the ad.
    pub value: f64,
    /// The price we pay if we win: the highest competing bid or the floor.
    pub paying_price: f64,
    pub clicked: Option<bool>,
}

impl Impression {
    pub fn new(id: AdId, value: f64, paying_price: f64) -> Self {
        Self {
            id,
            value,
            paying_price,
            clicked: None,
        }
    }

    pub fn with_click(mut self, clicked: bool) -> Self {
        self.clicked = Some(clicked);
        self
    }

    /// Value per unit of price. Free ads have an infinite ratio.
    pub fn ratio(&self) -> f64 {
        if self.paying_price > 0.0 {
            self.value / self.paying_price
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnapsackError {
    #[error("budget must be finite and non-negative, got {0}")]
    InvalidBudget(f64),
    #[error("instance too large for the exact solver: {0}")]
    InstanceTooLarge(String),
}

/// Total spend allowance.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Budget(f64);

impl Budget {
    pub fn new(total: f64) -> Result<Self, KnapsackError> {
        if total.is_finite() && total >= 0.0 {
            Ok(Self(total))
        } else {
            Err(KnapsackError::InvalidBudget(total))
        }
    }

    pub fn zero() -> Self {
        Self(0.0)
    }

    pub fn total(&self) -> f64 {
        self.0
    }
}

/// Ordering used everywhere ads are ranked: free ads first, then ratio
/// descending, ties by ascending id.
pub fn ratio_order(a: &Impression, b: &Impression) -> Ordering {
    let free_a = a.paying_price <= 0.0;
    let free_b = b.paying_price <= 0.0;
    match (free_a, free_b) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (true, true) => a.id.cmp(&b.id),
        (false, false) => b
            .ratio()
            .total_cmp(&a.ratio())
            .then_with(|| a.id.cmp(&b.id)),
    }
}

pub fn rank_by_ratio(ads: &[Impression]) -> Vec<Impression> {
    let mut ranked = ads.to_vec();
    ranked.sort_by(ratio_order);
    ranked
}

/// Optimal solution of the fractional relaxation together with its dual
/// threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalSelection {
    pub fractions: BTreeMap<AdId, f64>,
    pub lambda_star: f64,
    /// First ad in ratio order that could not be fully afforded.
    pub marginal_id: Option<AdId>,
    pub objective: f64,
    pub spend: f64,
}

impl FractionalSelection {
    pub fn fraction(&self, id: AdId) -> f64 {
        self.fractions.get(&id).copied().unwrap_or(0.0)
    }

    /// Ids bought in full.
    pub fn fully_selected(&self) -> impl Iterator<Item = AdId> + '_ {
        self.fractions
            .iter()
            .filter(|(_, &x)| x >= 1.0)
            .map(|(&id, _)| id)
    }
}

/// Greedy fill in ratio order.
///
/// The threshold is the ratio of the marginal ad. With enough budget to buy
/// everything there is no marginal ad and the threshold is 0.
pub fn solve_fractional(ads: &[Impression], budget: Budget) -> FractionalSelection {
    let ranked = rank_by_ratio(ads);
    let mut remaining = budget.total();
    // Relative slack so that a budget equal to the summed prices buys every ad
    // whatever order the sum was taken in.
    let slack = TOLERANCE * remaining.max(1.0);
    let mut fractions = BTreeMap::new();
    let mut marginal: Option<&Impression> = None;
    let mut objective = 0.0;
    let mut spend = 0.0;

    for ad in &ranked {
        let x = if marginal.is_some() {
            0.0
        } else if ad.paying_price <= remaining + slack {
            remaining = (remaining - ad.paying_price).max(0.0);
            1.0
        } else {
            marginal = Some(ad);
            let x = (remaining / ad.paying_price).clamp(0.0, 1.0);
            remaining = 0.0;
            x
        };
        if x > 0.0 {
            objective += x * ad.value;
            spend += x * ad.paying_price;
        }
        fractions.insert(ad.id, x);
    }

    FractionalSelection {
        fractions,
        lambda_star: marginal.map_or(0.0, |ad| ad.ratio()),
        marginal_id: marginal.map(|ad| ad.id),
        objective,
        spend,
    }
}

/// Optimal 0/1 selection.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegerSelection {
    pub selected: Vec<AdId>,
    pub objective: f64,
}

/// Exact 0/1 knapsack.
///
/// Integral prices use a dynamic program over capacity; anything else falls
/// back to subset enumeration, capped at [`MAX_ENUMERATION_ADS`] ads.
pub fn solve_integer_exact(
    ads: &[Impression],
    budget: Budget,
) -> Result<IntegerSelection, KnapsackError> {
    // Free ads never compete for budget.
    let (free, priced): (Vec<&Impression>, Vec<&Impression>) =
        ads.iter().partition(|ad| ad.paying_price <= 0.0);

    let mut selection = if priced.iter().all(|ad| is_integral(ad.paying_price)) {
        solve_dp(&priced, budget.total())?
    } else {
        solve_enumeration(&priced, budget.total())?
    };

    for ad in free {
        if ad.value > 0.0 {
            selection.objective += ad.value;
            selection.selected.push(ad.id);
        }
    }
    selection.selected.sort_unstable();
    Ok(selection)
}

fn is_integral(x: f64) -> bool {
    x.fract() == 0.0 && x < 1e12
}

fn solve_dp(ads: &[&Impression], budget: f64) -> Result<IntegerSelection, KnapsackError> {
    let total_price: f64 = ads.iter().map(|ad| ad.paying_price).sum();
    let capacity = (budget + TOLERANCE).floor().min(total_price).max(0.0) as usize;
    let cells = ads.len().saturating_mul(capacity + 1);
    if cells > MAX_DP_CELLS {
        return Err(KnapsackError::InstanceTooLarge(format!(
            "{} ads x capacity {} exceeds {} cells",
            ads.len(),
            capacity,
            MAX_DP_CELLS
        )));
    }

    let mut best = vec![0.0_f64; capacity + 1];
    let mut take = vec![false; cells];
    for (k, ad) in ads.iter().enumerate() {
        let w = ad.paying_price as usize;
        if w > capacity || ad.value <= 0.0 {
            continue;
        }
        let row = &mut take[k * (capacity + 1)..(k + 1) * (capacity + 1)];
        for c in (w..=capacity).rev() {
            let candidate = best[c - w] + ad.value;
            if candidate > best[c] {
                best[c] = candidate;
                row[c] = true;
            }
        }
    }

    let mut selected = Vec::new();
    let mut c = capacity;
    for k in (0..ads.len()).rev() {
        if take[k * (capacity + 1) + c] {
            selected.push(ads[k].id);
            c -= ads[k].paying_price as usize;
        }
    }
    Ok(IntegerSelection {
        selected,
        objective: best[capacity],
    })
}

fn solve_enumeration(
    ads: &[&Impression],
    budget: f64,
) -> Result<IntegerSelection, KnapsackError> {
    if ads.len() > MAX_ENUMERATION_ADS {
        return Err(KnapsackError::InstanceTooLarge(format!(
            "{} ads with non-integral prices exceeds the enumeration limit of {}",
            ads.len(),
            MAX_ENUMERATION_ADS
        )));
    }
    let mut best_mask = 0_u32;
    let mut best_value = 0.0;
    for mask in 0_u32..(1 << ads.len()) {
        let (mut value, mut price) = (0.0, 0.0);
        for (k, ad) in ads.iter().enumerate() {
            if mask & (1 << k) != 0 {
                value += ad.value;
                price += ad.paying_price;
            }
        }
        if price <= budget + TOLERANCE && value > best_value {
            best_value = value;
            best_mask = mask;
        }
    }
    let selected = ads
        .iter()
        .enumerate()
        .filter(|(k, _)| best_mask & (1 << k) != 0)
        .map(|(_, ad)| ad.id)
        .collect();
    Ok(IntegerSelection {
        selected,
        objective: best_value,
    })
}

/// Result of checking `Z_IP(B) - Z_IP(B - b_j x_j) <= v_j` for the marginal ad `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn gap_bound_check(ads: &[Impression], budget: Budget) -> Result<GapBound, KnapsackError> {
    let lp = solve_fractional(ads, budget);
    let Some(marginal_id) = lp.marginal_id else {
        return Ok(GapBound {
            lhs: 0.0,
            rhs: 0.0,
            holds: true,
        });
    };
    let marginal = ads
        .iter()
        .find(|ad| ad.id == marginal_id)
        .expect("marginal ad comes from the input");

    let reduced = (budget.total() - marginal.paying_price * lp.fraction(marginal_id)).max(0.0);
    let full = solve_integer_exact(ads, budget)?.objective;
    let cut = solve_integer_exact(ads, Budget(reduced))?.objective;
    let lhs = full - cut;
    let rhs = marginal.value;
    Ok(GapBound {
        lhs,
        rhs,
        holds: lhs <= rhs + TOLERANCE,
    })
}
