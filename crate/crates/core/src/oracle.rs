//! Brute-force verification on small, discretized instances.
//!
//! Every check enumerates its whole search space (allocations or bid
//! schedules over a grid) instead of trusting the greedy or parametric code
//! it verifies. Instances larger than the enumeration cap are refused rather
//! than sampled. Each check returns a serializable report that doubles as a
//! witness when it fails.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{clear_auction, efficient_allocation, Allocation, AuctionRules};
use crate::model::{find_profile, BidSchedule, FirmId, ValuationProfile};
use crate::money::Money;
use crate::secondary::{run_secondary, AcquisitionCosts, SecondaryRules};
use crate::settlement::settle;
use crate::strategy::truthful_schedule;
use crate::Error;

pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Slack allowed on "no profitable deviation" comparisons.
pub const EPSILON: Money = Money::EPSILON;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("instance needs {count} evaluations, above the cap of {cap}")]
    InstanceTooLarge { count: u128, cap: u64 },
    #[error("bid grid is empty")]
    EmptyGrid,
    #[error("bid grid must be strictly increasing and non-negative")]
    BadGrid,
    #[error("firm {0} has no value profile")]
    UnknownFirm(FirmId),
    #[error("instance has no speculator")]
    NoSpeculator,
}

fn guard(count: u128, cap: u64) -> Result<(), OracleError> {
    if count > u128::from(cap) {
        Err(OracleError::InstanceTooLarge { count, cap })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidGrid {
    points: Vec<Money>,
    pub max_units: usize,
}

impl BidGrid {
    pub fn new(points: Vec<Money>, max_units: usize) -> Result<Self, OracleError> {
        if points.is_empty() {
            return Err(OracleError::EmptyGrid);
        }
        if points[0].is_negative() || points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(OracleError::BadGrid);
        }
        Ok(BidGrid { points, max_units })
    }

    /// `lo, lo + step, ...` up to and including `hi`.
    pub fn uniform(lo: Money, hi: Money, step: Money, max_units: usize) -> Result<Self, OracleError> {
        if !step.is_positive() {
            return Err(OracleError::BadGrid);
        }
        let mut points = Vec::new();
        let mut x = lo;
        while x <= hi {
            points.push(x);
            x += step;
        }
        BidGrid::new(points, max_units)
    }

    pub fn points(&self) -> &[Money] {
        &self.points
    }

    /// Number of non-increasing schedules of length `units`: C(g + units - 1, units).
    pub fn schedule_count(&self, units: usize) -> u128 {
        let g = self.points.len() as u128;
        let mut c: u128 = 1;
        for i in 0..units as u128 {
            c = c * (g + i) / (i + 1);
        }
        c
    }

    /// All non-increasing schedules of length `units`, lowest first in
    /// lexicographic order.
    pub fn schedules(&self, firm: FirmId, units: usize) -> Vec<BidSchedule> {
        fn rec(points: &[Money], upper: usize, left: usize, cur: &mut Vec<Money>, out: &mut Vec<Vec<Money>>) {
            if left == 0 {
                out.push(cur.clone());
                return;
            }
            for i in 0..=upper {
                cur.push(points[i]);
                rec(points, i, left - 1, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(&self.points, self.points.len() - 1, units, &mut Vec::with_capacity(units), &mut out);
        out.into_iter().map(|b| BidSchedule::new(firm, b)).collect()
    }
}

fn prefix_sums(profiles: &[ValuationProfile]) -> Vec<Vec<Money>> {
    profiles
        .iter()
        .map(|p| {
            let mut acc = vec![Money::ZERO];
            for v in &p.values {
                let last = *acc.last().unwrap();
                acc.push(last + *v);
            }
            acc
        })
        .collect()
}

/// Number of ways to place exactly `total` units under per-firm caps.
fn count_allocations(caps: &[usize], total: usize) -> u128 {
    let mut ways = vec![0u128; total + 1];
    ways[0] = 1;
    for &cap in caps {
        let mut next = vec![0u128; total + 1];
        for (t, w) in ways.iter().enumerate() {
            if *w == 0 {
                continue;
            }
            for u in 0..=cap.min(total - t) {
                next[t + u] = next[t + u].saturating_add(*w);
            }
        }
        ways = next;
    }
    ways[total]
}

fn for_each_allocation(caps: &[usize], total: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(caps: &[usize], i: usize, left: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if i == caps.len() {
            if left == 0 {
                f(cur);
            }
            return;
        }
        let room: usize = caps[i + 1..].iter().sum();
        let lo = left.saturating_sub(room);
        for u in lo..=caps[i].min(left) {
            cur.push(u);
            rec(caps, i + 1, left - u, cur, f);
            cur.pop();
        }
    }
    rec(caps, 0, total, &mut Vec::with_capacity(caps.len()), f);
}

fn to_allocation(profiles: &[ValuationProfile], units: &[usize]) -> Allocation {
    profiles.iter().zip(units).map(|(p, u)| (p.firm_id, *u)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurplusSearch {
    pub max_surplus: Money,
    pub argmax: Vec<Allocation>,
    pub evaluated: u64,
}

/// Exhaustive search over every way to hand out `min(k, total demand)` units.
pub fn enumerate_allocations_max_surplus(
    profiles: &[ValuationProfile],
    k: usize,
    cap: u64,
) -> Result<SurplusSearch, OracleError> {
    let caps: Vec<usize> = profiles.iter().map(ValuationProfile::units).collect();
    let total = k.min(caps.iter().sum());
    guard(count_allocations(&caps, total), cap)?;
    let sums = prefix_sums(profiles);
    let mut best = Money::from_nanos(i64::MIN);
    let mut argmax = Vec::new();
    let mut evaluated = 0u64;
    for_each_allocation(&caps, total, &mut |units| {
        evaluated += 1;
        let s: Money = units.iter().enumerate().map(|(i, u)| sums[i][*u]).sum();
        if s > best {
            best = s;
            argmax.clear();
        }
        if s == best {
            argmax.push(to_allocation(profiles, units));
        }
    });
    Ok(SurplusSearch { max_surplus: best, argmax, evaluated })
}

fn held_values(profiles: &[ValuationProfile], units: impl Fn(usize, &ValuationProfile) -> usize) -> Vec<Money> {
    let mut v: Vec<Money> =
        profiles.iter().enumerate().flat_map(|(i, p)| p.values[..units(i, p)].iter().copied()).collect();
    v.sort_unstable();
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub passed: bool,
    pub greedy_surplus: Money,
    pub max_surplus: Money,
    pub maximizers: usize,
    pub evaluated: u64,
    /// An allocation that ties or beats the greedy one while holding a
    /// different multiset of values.
    pub counterexample: Option<Allocation>,
}

/// The greedy allocation attains the enumerated maximum, and every other
/// allocation either holds the same multiset of values (an equal-value swap)
/// or does strictly worse.
pub fn check_efficiency_equivalence(
    profiles: &[ValuationProfile],
    k: usize,
    cap: u64,
) -> Result<EfficiencyReport, OracleError> {
    let caps: Vec<usize> = profiles.iter().map(ValuationProfile::units).collect();
    let total = k.min(caps.iter().sum());
    guard(count_allocations(&caps, total), cap)?;

    let greedy = efficient_allocation(profiles, k);
    let sums = prefix_sums(profiles);
    let greedy_surplus: Money = profiles.iter().enumerate().map(|(i, p)| sums[i][greedy.units(p.firm_id)]).sum();
    let greedy_values = held_values(profiles, |_, p| greedy.units(p.firm_id));

    let mut max_surplus = Money::from_nanos(i64::MIN);
    let mut maximizers = 0usize;
    let mut evaluated = 0u64;
    let mut counterexample = None;
    for_each_allocation(&caps, total, &mut |units| {
        evaluated += 1;
        let s: Money = units.iter().enumerate().map(|(i, u)| sums[i][*u]).sum();
        if s > max_surplus {
            max_surplus = s;
            maximizers = 0;
        }
        if s == max_surplus {
            maximizers += 1;
        }
        if s >= greedy_surplus && counterexample.is_none() {
            let values = held_values(profiles, |i, _| units[i]);
            if values != greedy_values {
                counterexample = Some(to_allocation(profiles, units));
            }
        }
    });

    Ok(EfficiencyReport {
        passed: greedy_surplus == max_surplus && counterexample.is_none(),
        greedy_surplus,
        max_surplus,
        maximizers,
        evaluated,
        counterexample,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthfulAgreementReport {
    pub passed: bool,
    pub auction_surplus: Money,
    pub max_surplus: Money,
}

/// Clearing truthful bids lands on a surplus-maximizing allocation.
pub fn check_truthful_agreement(
    profiles: &[ValuationProfile],
    k: usize,
    cap: u64,
) -> Result<TruthfulAgreementReport, Error> {
    let search = enumerate_allocations_max_surplus(profiles, k, cap)?;
    let schedules: Vec<BidSchedule> = profiles.iter().map(truthful_schedule).collect();
    let outcome = clear_auction(&schedules, profiles, &AuctionRules::new(k))?;
    let sums = prefix_sums(profiles);
    let auction_surplus: Money =
        profiles.iter().enumerate().map(|(i, p)| sums[i][outcome.allocation.units(p.firm_id)]).sum();
    Ok(TruthfulAgreementReport {
        passed: auction_surplus == search.max_surplus,
        auction_surplus,
        max_surplus: search.max_surplus,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResaleReport {
    pub passed: bool,
    pub initial_allocation: Allocation,
    pub initially_efficient: bool,
    pub initial_surplus: Money,
    pub final_surplus: Money,
    pub max_surplus: Money,
    pub trades: usize,
    pub total_rent: Money,
}

/// Clears the given bids; when the result is inefficient, resale must reach
/// the enumerated maximum for the units sold and pay strictly positive rent.
/// An efficient start must trigger no trades at all.
pub fn check_resale_restores_efficiency(
    profiles: &[ValuationProfile],
    schedules: &[BidSchedule],
    rules: &AuctionRules,
    secondary: &SecondaryRules,
    cap: u64,
) -> Result<ResaleReport, Error> {
    let outcome = clear_auction(schedules, profiles, rules)?;
    let sold = outcome.allocation.total();
    let search = enumerate_allocations_max_surplus(profiles, sold, cap)?;
    let sums = prefix_sums(profiles);
    let surplus_of =
        |a: &Allocation| -> Money { profiles.iter().enumerate().map(|(i, p)| sums[i][a.units(p.firm_id)]).sum() };
    let initial_surplus = surplus_of(&outcome.allocation);
    let initially_efficient = initial_surplus == search.max_surplus;
    let costs = AcquisitionCosts::from_auction(&outcome);
    let resale = run_secondary(&outcome.allocation, profiles, secondary, Some(&costs))?;
    let final_surplus = surplus_of(&resale.final_allocation);
    let passed = if initially_efficient {
        resale.trades.is_empty()
    } else {
        final_surplus == search.max_surplus && resale.total_rent.is_positive()
    };
    Ok(ResaleReport {
        passed,
        initial_allocation: outcome.allocation,
        initially_efficient,
        initial_surplus,
        final_surplus,
        max_surplus: search.max_surplus,
        trades: resale.trades.len(),
        total_rent: resale.total_rent,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub firm_id: FirmId,
    pub best_schedule: BidSchedule,
    pub best_payoff: Money,
    pub current_payoff: Money,
    pub gain_over_current: Money,
    pub epsilon: Money,
    pub evaluated: u64,
}

fn replace_schedule(schedules: &[BidSchedule], candidate: &BidSchedule) -> Vec<BidSchedule> {
    let mut out: Vec<BidSchedule> = schedules.iter().filter(|s| s.firm_id != candidate.firm_id).cloned().collect();
    out.push(candidate.clone());
    out
}

/// Exhaustive best response of `firm` over every grid schedule, holding the
/// other schedules fixed. Payoff is auction surplus, plus resale gains when
/// `secondary` is given. Ties go to the lexicographically lowest schedule.
pub fn best_response(
    firm: FirmId,
    profiles: &[ValuationProfile],
    schedules: &[BidSchedule],
    grid: &BidGrid,
    rules: &AuctionRules,
    secondary: Option<&SecondaryRules>,
    cap: u64,
) -> Result<DeviationReport, Error> {
    let profile = find_profile(profiles, firm).ok_or(OracleError::UnknownFirm(firm))?;
    let units = grid.max_units.min(profile.units()).min(rules.k);
    guard(grid.schedule_count(units), cap)?;

    let payoff = |all: &[BidSchedule]| -> Result<Money, Error> {
        Ok(settle(all, profiles, rules, secondary)?.payoff(firm, profiles))
    };
    let current_payoff = if schedules.iter().any(|s| s.firm_id == firm) {
        payoff(schedules)?
    } else {
        payoff(&replace_schedule(schedules, &BidSchedule::empty(firm)))?
    };

    let candidates = grid.schedules(firm, units);
    let payoffs =
        candidates.par_iter().map(|c| payoff(&replace_schedule(schedules, c))).collect::<Result<Vec<_>, Error>>()?;
    let (best_idx, best_payoff) =
        payoffs
            .iter()
            .enumerate()
            .fold((0usize, payoffs[0]), |(bi, bp), (i, p)| if *p > bp { (i, *p) } else { (bi, bp) });

    Ok(DeviationReport {
        firm_id: firm,
        best_schedule: candidates[best_idx].clone(),
        best_payoff,
        current_payoff,
        gain_over_current: (best_payoff - current_payoff).max(Money::ZERO),
        epsilon: EPSILON,
        evaluated: candidates.len() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceMonotonicityReport {
    pub passed: bool,
    pub price_without: Money,
    pub price_with: Money,
    pub speculator_units: usize,
    /// The speculator won a unit that displaced a polluter bid above the old price.
    pub strict_expected: bool,
    pub strict: bool,
}

/// Clears with and without the speculator's schedule, everything else fixed.
pub fn check_speculator_price_monotonicity(
    profiles: &[ValuationProfile],
    polluter_schedules: &[BidSchedule],
    speculator_schedule: &BidSchedule,
    rules: &AuctionRules,
) -> Result<PriceMonotonicityReport, Error> {
    let without = clear_auction(polluter_schedules, profiles, rules)?;
    let with = clear_auction(&replace_schedule(polluter_schedules, speculator_schedule), profiles, rules)?;
    let speculator_units = with.allocation.units(speculator_schedule.firm_id);
    let kth_bid = (without.winning_bids.len() == rules.k).then(|| without.winning_bids[rules.k - 1].bid);
    let strict_expected = speculator_units > 0 && kth_bid.is_some_and(|b| b > without.clearing_price);
    let strict = with.clearing_price > without.clearing_price;
    Ok(PriceMonotonicityReport {
        passed: with.clearing_price >= without.clearing_price && (!strict_expected || strict),
        price_without: without.clearing_price,
        price_with: with.clearing_price,
        speculator_units,
        strict_expected,
        strict,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirmShading {
    pub firm_id: FirmId,
    pub without_resale: BidSchedule,
    pub with_resale: BidSchedule,
    pub weakly_lower: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadingReport {
    pub passed: bool,
    pub firms: Vec<FirmShading>,
    pub price_without: Money,
    pub price_with: Money,
}

/// Best responses of every polluter against the baseline schedules, once
/// without and once with a resale stage. Passes when every with-resale
/// response is elementwise at or below its counterpart and the price from
/// clearing all with-resale responses does not exceed the price from the
/// without-resale responses.
pub fn check_secondary_shading(
    profiles: &[ValuationProfile],
    baseline: &[BidSchedule],
    grid: &BidGrid,
    rules: &AuctionRules,
    secondary: &SecondaryRules,
    cap: u64,
) -> Result<ShadingReport, Error> {
    let polluters: Vec<&ValuationProfile> = profiles.iter().filter(|p| !p.is_speculator()).collect();
    let total: u128 =
        polluters.iter().map(|p| 2 * grid.schedule_count(grid.max_units.min(p.units()).min(rules.k))).sum();
    guard(total, cap)?;

    let mut firms = Vec::with_capacity(polluters.len());
    for p in &polluters {
        let without = best_response(p.firm_id, profiles, baseline, grid, rules, None, cap)?;
        let with = best_response(p.firm_id, profiles, baseline, grid, rules, Some(secondary), cap)?;
        firms.push(FirmShading {
            firm_id: p.firm_id,
            weakly_lower: with.best_schedule.weakly_below(&without.best_schedule),
            without_resale: without.best_schedule,
            with_resale: with.best_schedule,
        });
    }

    let profile_of = |pick: fn(&FirmShading) -> &BidSchedule| -> Vec<BidSchedule> {
        let mut out: Vec<BidSchedule> =
            baseline.iter().filter(|s| !firms.iter().any(|f| f.firm_id == s.firm_id)).cloned().collect();
        out.extend(firms.iter().map(|f| pick(f).clone()));
        out
    };
    let price_without = clear_auction(&profile_of(|f| &f.without_resale), profiles, rules)?.clearing_price;
    let price_with = clear_auction(&profile_of(|f| &f.with_resale), profiles, rules)?.clearing_price;

    Ok(ShadingReport {
        passed: firms.iter().all(|f| f.weakly_lower) && price_with <= price_without,
        firms,
        price_without,
        price_with,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemarkReport {
    pub passed: bool,
    pub speculator: FirmId,
    pub max_profit: Money,
    pub best_schedule: BidSchedule,
    pub evaluated: u64,
}

/// With every polluter bidding its values, no speculator schedule on the grid
/// earns a positive combined auction and resale profit.
pub fn check_remark_zero_profit(
    profiles: &[ValuationProfile],
    grid: &BidGrid,
    rules: &AuctionRules,
    secondary: &SecondaryRules,
    cap: u64,
) -> Result<RemarkReport, Error> {
    let speculator = profiles.iter().find(|p| p.is_speculator()).ok_or(OracleError::NoSpeculator)?.firm_id;
    let schedules: Vec<BidSchedule> = profiles
        .iter()
        .map(|p| if p.is_speculator() { BidSchedule::empty(p.firm_id) } else { truthful_schedule(p) })
        .collect();
    let report = best_response(speculator, profiles, &schedules, grid, rules, Some(secondary), cap)?;
    Ok(RemarkReport {
        passed: report.best_payoff <= EPSILON,
        speculator,
        max_profit: report.best_payoff,
        best_schedule: report.best_schedule,
        evaluated: report.evaluated,
    })
}
