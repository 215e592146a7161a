//! Sealed-bid uniform-price auction clearing and the efficient benchmark.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{find_profile, BidSchedule, FirmId, ModelError, ValuationProfile};
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuctionError {
    #[error("firm {0} submitted more than one schedule")]
    DuplicateFirmId(FirmId),
    #[error("no schedules submitted")]
    EmptyMarket,
    #[error("firm {0} bid without a value profile")]
    UnknownFirm(FirmId),
    #[error(transparent)]
    InvalidSchedule(#[from] ModelError),
}

/// Units held per firm.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation(BTreeMap<FirmId, usize>);

impl Allocation {
    pub fn new() -> Self {
        Allocation(BTreeMap::new())
    }

    pub fn units(&self, firm: FirmId) -> usize {
        self.0.get(&firm).copied().unwrap_or(0)
    }

    pub fn set(&mut self, firm: FirmId, units: usize) {
        self.0.insert(firm, units);
    }

    pub fn add(&mut self, firm: FirmId, units: isize) {
        let slot = self.0.entry(firm).or_insert(0);
        *slot = (*slot as isize + units) as usize;
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (FirmId, usize)> + '_ {
        self.0.iter().map(|(f, u)| (*f, *u))
    }

    /// Same holdings ignoring firms listed with zero units.
    pub fn same_holdings(&self, other: &Allocation) -> bool {
        let firms: BTreeSet<FirmId> = self.0.keys().chain(other.0.keys()).copied().collect();
        firms.into_iter().all(|f| self.units(f) == other.units(f))
    }
}

impl FromIterator<(FirmId, usize)> for Allocation {
    fn from_iter<I: IntoIterator<Item = (FirmId, usize)>>(iter: I) -> Self {
        Allocation(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingRule {
    /// The (k+1)-th highest bid: the highest losing bid.
    #[default]
    HighestLosing,
    /// The k-th highest bid: the lowest winning bid.
    LowestWinning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionRules {
    pub k: usize,
    #[serde(default)]
    pub reserve: Money,
    #[serde(default)]
    pub pricing: PricingRule,
}

impl AuctionRules {
    pub fn new(k: usize) -> Self {
        AuctionRules { k, reserve: Money::ZERO, pricing: PricingRule::HighestLosing }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitBid {
    pub firm_id: FirmId,
    pub unit_index: usize,
    pub bid: Money,
}

// Priority order shared by clearing and the efficient benchmark:
// amount descending, then firm id ascending, then unit index ascending.
fn priority(a: &UnitBid, b: &UnitBid) -> Ordering {
    b.bid.cmp(&a.bid).then(a.firm_id.cmp(&b.firm_id)).then(a.unit_index.cmp(&b.unit_index))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub allocation: Allocation,
    pub clearing_price: Money,
    pub revenue: Money,
    pub per_firm_surplus: BTreeMap<FirmId, Money>,
    pub winning_bids: Vec<UnitBid>,
}

impl AuctionOutcome {
    pub fn payment(&self, firm: FirmId) -> Money {
        self.clearing_price * self.allocation.units(firm)
    }

    pub fn bidder_surplus(&self) -> Money {
        self.per_firm_surplus.values().sum()
    }
}

/// Clears the auction. The `rules.k` highest bids strictly above the reserve
/// win; every winner pays the same per-unit price. Each bidding firm needs a
/// profile in `profiles` so its surplus can be computed.
pub fn clear_auction(
    schedules: &[BidSchedule],
    profiles: &[ValuationProfile],
    rules: &AuctionRules,
) -> Result<AuctionOutcome, AuctionError> {
    if schedules.is_empty() {
        return Err(AuctionError::EmptyMarket);
    }
    let mut seen = BTreeSet::new();
    for s in schedules {
        if !seen.insert(s.firm_id) {
            return Err(AuctionError::DuplicateFirmId(s.firm_id));
        }
        s.validate(rules.k)?;
        if find_profile(profiles, s.firm_id).is_none() {
            return Err(AuctionError::UnknownFirm(s.firm_id));
        }
    }

    let mut eligible: Vec<UnitBid> = schedules
        .iter()
        .flat_map(|s| {
            s.bids.iter().enumerate().map(move |(unit_index, &bid)| UnitBid { firm_id: s.firm_id, unit_index, bid })
        })
        .filter(|b| b.bid > rules.reserve)
        .collect();
    eligible.sort_unstable_by(priority);

    let won = eligible.len().min(rules.k);
    let clearing_price = match rules.pricing {
        PricingRule::HighestLosing => eligible.get(rules.k).map_or(rules.reserve, |b| b.bid),
        PricingRule::LowestWinning => {
            if won == 0 {
                rules.reserve
            } else {
                eligible[won - 1].bid
            }
        }
    };
    eligible.truncate(won);

    let mut allocation: Allocation = schedules.iter().map(|s| (s.firm_id, 0)).collect();
    for b in &eligible {
        allocation.add(b.firm_id, 1);
    }

    let per_firm_surplus = schedules
        .iter()
        .map(|s| {
            let units = allocation.units(s.firm_id);
            let profile = find_profile(profiles, s.firm_id).expect("checked above");
            let surplus: Money =
                (0..units).map(|u| profile.values.get(u).copied().unwrap_or(Money::ZERO) - clearing_price).sum();
            (s.firm_id, surplus)
        })
        .collect();

    Ok(AuctionOutcome {
        revenue: clearing_price * won,
        allocation,
        clearing_price,
        per_firm_surplus,
        winning_bids: eligible,
    })
}

/// Greedy selection of the `k` largest marginal values across firms. Values
/// are non-increasing per firm, so each firm's selection is a prefix.
pub fn efficient_allocation(profiles: &[ValuationProfile], k: usize) -> Allocation {
    let mut units: Vec<UnitBid> = profiles
        .iter()
        .flat_map(|p| {
            p.values.iter().enumerate().map(move |(unit_index, &bid)| UnitBid { firm_id: p.firm_id, unit_index, bid })
        })
        .collect();
    units.sort_unstable_by(priority);
    let mut allocation: Allocation = profiles.iter().map(|p| (p.firm_id, 0)).collect();
    for u in units.iter().take(k) {
        allocation.add(u.firm_id, 1);
    }
    allocation
}

/// Sum of the held units' marginal values. Payments are transfers and do not
/// enter.
pub fn total_surplus(allocation: &Allocation, profiles: &[ValuationProfile]) -> Money {
    allocation
        .iter()
        .map(|(firm, units)| {
            let profile = find_profile(profiles, firm);
            debug_assert!(profile.is_some_and(|p| units <= p.units()), "allocation exceeds demand");
            profile.map_or(Money::ZERO, |p| p.value_of(units))
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurplusSplit {
    pub bidder_surplus: Money,
    pub revenue: Money,
    pub total: Money,
}

pub fn surplus_decomposition(outcome: &AuctionOutcome, profiles: &[ValuationProfile]) -> SurplusSplit {
    let bidder_surplus = outcome.bidder_surplus();
    let total = bidder_surplus + outcome.revenue;
    debug_assert_eq!(total, total_surplus(&outcome.allocation, profiles));
    SurplusSplit { bidder_surplus, revenue: outcome.revenue, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ValuationProfile;
    use crate::worked_example as ex;

    fn m(x: f64) -> Money {
        Money::from_f64(x)
    }

    fn id(i: u32) -> FirmId {
        FirmId(i)
    }

    fn surpluses(outcome: &AuctionOutcome) -> Vec<Money> {
        outcome.per_firm_surplus.values().copied().collect()
    }

    #[test]
    fn truthful_row() {
        let profiles = ex::polluter_profiles();
        let schedules = ex::truthful_bids();
        let out = clear_auction(&schedules, &profiles, &AuctionRules::new(4)).unwrap();
        assert_eq!(out.clearing_price, m(6.0));
        assert_eq!(out.revenue, m(24.0));
        assert_eq!(surpluses(&out), vec![m(7.0), m(3.0), m(0.0), m(0.0)]);
        assert_eq!(out.bidder_surplus(), m(10.0));
        let split = surplus_decomposition(&out, &profiles);
        assert_eq!((split.bidder_surplus, split.revenue, split.total), (m(10.0), m(24.0), m(34.0)));
    }

    #[test]
    fn moderate_reduction_with_speculator() {
        let profiles = ex::all_profiles();
        let mut schedules = ex::moderate_reduction_bids();
        schedules.push(BidSchedule::new(ex::SPECULATOR, vec![m(6.5), m(0.0)]));
        let out = clear_auction(&schedules, &profiles, &AuctionRules::new(4)).unwrap();
        assert_eq!(out.clearing_price, m(6.0));
        assert_eq!(out.revenue, m(24.0));
        assert_eq!(out.allocation.units(id(1)), 2);
        assert_eq!(out.allocation.units(id(2)), 1);
        assert_eq!(out.allocation.units(ex::SPECULATOR), 1);
        // the speculator's own surplus is its zero value minus the price
        assert_eq!(surpluses(&out), vec![m(7.0), m(2.0), m(0.0), m(0.0), m(-6.0)]);
    }

    #[test]
    fn moderate_reduction_without_speculator() {
        let profiles = ex::polluter_profiles();
        let out = clear_auction(&ex::moderate_reduction_bids(), &profiles, &AuctionRules::new(4)).unwrap();
        assert_eq!(out.clearing_price, m(5.0));
        // B2's second bid equals the price and loses
        assert_eq!(out.allocation.units(id(2)), 1);
        let split = surplus_decomposition(&out, &profiles);
        assert_eq!((split.bidder_surplus, split.revenue, split.total), (m(13.0), m(20.0), m(33.0)));
    }

    #[test]
    fn deep_reduction_without_speculator() {
        let profiles = ex::polluter_profiles();
        let out = clear_auction(&ex::deep_reduction_bids(), &profiles, &AuctionRules::new(4)).unwrap();
        assert_eq!(out.clearing_price, m(4.0));
        assert_eq!(out.revenue, m(16.0));
        assert_eq!(surpluses(&out), vec![m(11.0), m(4.0), m(2.0), m(0.0)]);
        let split = surplus_decomposition(&out, &profiles);
        assert_eq!((split.bidder_surplus, split.revenue, split.total), (m(17.0), m(16.0), m(33.0)));
    }

    #[test]
    fn fewer_bids_than_permits_prices_at_reserve() {
        let profiles = vec![ValuationProfile::polluter(id(1), vec![m(9.0)])];
        let schedules = vec![BidSchedule::new(id(1), vec![m(9.0)])];
        let out = clear_auction(&schedules, &profiles, &AuctionRules::new(3)).unwrap();
        assert_eq!(out.clearing_price, Money::ZERO);
        assert_eq!(out.allocation.units(id(1)), 1);
        assert_eq!(out.revenue, Money::ZERO);
    }

    #[test]
    fn reserve_excludes_low_bids() {
        let profiles = ex::polluter_profiles();
        let rules = AuctionRules { k: 4, reserve: m(6.5), pricing: PricingRule::HighestLosing };
        let out = clear_auction(&ex::truthful_bids(), &profiles, &rules).unwrap();
        assert_eq!(out.allocation.total(), 4);
        assert_eq!(out.clearing_price, m(6.5));
        let rules = AuctionRules { k: 4, reserve: m(7.5), pricing: PricingRule::HighestLosing };
        let out = clear_auction(&ex::truthful_bids(), &profiles, &rules).unwrap();
        assert_eq!(out.allocation.total(), 3);
        assert_eq!(out.clearing_price, m(7.5));
    }

    #[test]
    fn lowest_winning_rule() {
        let profiles = ex::polluter_profiles();
        let rules = AuctionRules { k: 4, reserve: Money::ZERO, pricing: PricingRule::LowestWinning };
        let out = clear_auction(&ex::truthful_bids(), &profiles, &rules).unwrap();
        assert_eq!(out.clearing_price, m(7.0));
        assert_eq!(out.revenue, m(28.0));
    }

    #[test]
    fn errors() {
        let profiles = ex::polluter_profiles();
        assert_eq!(clear_auction(&[], &profiles, &AuctionRules::new(4)), Err(AuctionError::EmptyMarket));
        let dup = vec![BidSchedule::new(id(1), vec![m(1.0)]), BidSchedule::new(id(1), vec![m(2.0)])];
        assert_eq!(clear_auction(&dup, &profiles, &AuctionRules::new(4)), Err(AuctionError::DuplicateFirmId(id(1))));
        let stranger = vec![BidSchedule::new(id(9), vec![m(1.0)])];
        assert_eq!(clear_auction(&stranger, &profiles, &AuctionRules::new(4)), Err(AuctionError::UnknownFirm(id(9))));
    }

    #[test]
    fn efficient_allocation_cases() {
        let alloc = efficient_allocation(&ex::polluter_profiles(), 4);
        assert_eq!(alloc.iter().collect::<Vec<_>>(), vec![(id(1), 2), (id(2), 2), (id(3), 0), (id(4), 0)]);
        assert_eq!(total_surplus(&alloc, &ex::polluter_profiles()), m(34.0));

        let zeros = vec![
            ValuationProfile::polluter(id(1), vec![m(0.0)]),
            ValuationProfile::polluter(id(2), vec![m(0.0)]),
            ValuationProfile::polluter(id(3), vec![m(0.0)]),
        ];
        let alloc = efficient_allocation(&zeros, 2);
        assert_eq!(alloc.iter().collect::<Vec<_>>(), vec![(id(1), 1), (id(2), 1), (id(3), 0)]);

        let pair = vec![
            ValuationProfile::polluter(id(1), vec![m(9.0), m(1.0)]),
            ValuationProfile::polluter(id(2), vec![m(8.0), m(7.0)]),
        ];
        let alloc = efficient_allocation(&pair, 2);
        assert_eq!(alloc.iter().collect::<Vec<_>>(), vec![(id(1), 1), (id(2), 1)]);
    }

    #[test]
    fn total_surplus_cases() {
        assert_eq!(total_surplus(&Allocation::new(), &ex::polluter_profiles()), Money::ZERO);
        let alloc: Allocation = [(id(1), 1), (id(2), 1), (id(3), 1), (ex::SPECULATOR, 1)].into_iter().collect();
        assert_eq!(total_surplus(&alloc, &ex::all_profiles()), m(24.0));
    }
}
