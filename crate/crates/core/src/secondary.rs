//! Post-auction resale.
//!
//! Units move from low-value holders to higher-value non-holders one at a
//! time, largest tradeable gap first, until no holder's lowest held unit is
//! worth less than some other firm's next unit. Each trade is priced inside
//! the open interval between the two marginal values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::auction::{total_surplus, Allocation, AuctionOutcome};
use crate::model::{find_profile, FirmId, ValuationProfile};
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SecondaryError {
    #[error("trade share beta must lie strictly inside (0, 1), got {0}")]
    InvalidBeta(f64),
    #[error("firm {firm} holds {units} units but demands only {demand}")]
    InvalidAllocation { firm: FirmId, units: usize, demand: usize },
    #[error("firm {0} holds units without a value profile")]
    UnknownFirm(FirmId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondaryRules {
    /// Share of the tradeable gap captured by the seller.
    pub beta: f64,
    /// Sellers refuse to sell below what they paid for the unit.
    #[serde(default)]
    pub cost_floor: bool,
}

impl Default for SecondaryRules {
    fn default() -> Self {
        SecondaryRules { beta: 0.5, cost_floor: false }
    }
}

impl SecondaryRules {
    pub fn validate(&self) -> Result<(), SecondaryError> {
        if self.beta > 0.0 && self.beta < 1.0 {
            Ok(())
        } else {
            Err(SecondaryError::InvalidBeta(self.beta))
        }
    }
}

/// Purchase price of every held unit, in acquisition order. The most recently
/// acquired unit is the one sold first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AcquisitionCosts(BTreeMap<FirmId, Vec<Money>>);

impl AcquisitionCosts {
    pub fn new() -> Self {
        AcquisitionCosts(BTreeMap::new())
    }

    pub fn from_auction(outcome: &AuctionOutcome) -> Self {
        let mut costs = AcquisitionCosts::new();
        for (firm, units) in outcome.allocation.iter() {
            costs.push_many(firm, outcome.clearing_price, units);
        }
        costs
    }

    pub fn push(&mut self, firm: FirmId, cost: Money) {
        self.0.entry(firm).or_default().push(cost);
    }

    pub fn push_many(&mut self, firm: FirmId, cost: Money, units: usize) {
        self.0.entry(firm).or_default().extend(std::iter::repeat_n(cost, units));
    }

    pub fn pop(&mut self, firm: FirmId) -> Option<Money> {
        self.0.get_mut(&firm).and_then(Vec::pop)
    }

    pub fn last(&self, firm: FirmId) -> Option<Money> {
        self.0.get(&firm).and_then(|c| c.last().copied())
    }

    pub fn held(&self, firm: FirmId) -> &[Money] {
        self.0.get(&firm).map_or(&[], Vec::as_slice)
    }

    /// Removes and returns the `units` most recently acquired costs.
    pub fn take_latest(&mut self, firm: FirmId, units: usize) -> Vec<Money> {
        match self.0.get_mut(&firm) {
            Some(costs) => {
                let at = costs.len().saturating_sub(units);
                costs.split_off(at)
            }
            None => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub seller: FirmId,
    pub buyer: FirmId,
    pub price: Money,
    pub seller_value: Money,
    pub buyer_value: Money,
    /// Price minus the seller's reservation: its marginal value, or its
    /// purchase cost when that is higher and the cost floor is on.
    pub rent: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecondaryResult {
    pub final_allocation: Allocation,
    pub trades: Vec<TradeRecord>,
    pub total_rent: Money,
    pub surplus_gain: Money,
    pub final_costs: AcquisitionCosts,
}

impl SecondaryResult {
    pub fn receipts(&self, firm: FirmId) -> Money {
        self.trades.iter().filter(|t| t.seller == firm).map(|t| t.price).sum()
    }

    pub fn purchases(&self, firm: FirmId) -> Money {
        self.trades.iter().filter(|t| t.buyer == firm).map(|t| t.price).sum()
    }
}

struct Candidate {
    seller: FirmId,
    buyer: FirmId,
    seller_value: Money,
    buyer_value: Money,
    reservation: Money,
}

impl Candidate {
    fn gap(&self) -> Money {
        self.buyer_value - self.reservation
    }
}

/// Trades until the holdings are value-ordered. `costs` supplies purchase
/// prices for the cost floor; without it every unit counts as free.
pub fn run_secondary(
    initial: &Allocation,
    profiles: &[ValuationProfile],
    rules: &SecondaryRules,
    costs: Option<&AcquisitionCosts>,
) -> Result<SecondaryResult, SecondaryError> {
    rules.validate()?;
    for (firm, units) in initial.iter() {
        let profile = find_profile(profiles, firm).ok_or(SecondaryError::UnknownFirm(firm))?;
        if units > profile.units() {
            return Err(SecondaryError::InvalidAllocation { firm, units, demand: profile.units() });
        }
    }

    let mut held: BTreeMap<FirmId, usize> = profiles.iter().map(|p| (p.firm_id, initial.units(p.firm_id))).collect();
    let mut costs = costs.cloned().unwrap_or_default();
    let mut trades = Vec::new();

    loop {
        let mut best: Option<Candidate> = None;
        for seller in profiles {
            let s_units = held[&seller.firm_id];
            if s_units == 0 {
                continue;
            }
            let seller_value = seller.values[s_units - 1];
            let reservation = match (rules.cost_floor, costs.last(seller.firm_id)) {
                (true, Some(cost)) => seller_value.max(cost),
                _ => seller_value,
            };
            for buyer in profiles {
                if buyer.firm_id == seller.firm_id {
                    continue;
                }
                let Some(&buyer_value) = buyer.values.get(held[&buyer.firm_id]) else {
                    continue;
                };
                // an open price interval needs room for at least one interior amount
                if buyer_value - reservation < Money::from_nanos(2) {
                    continue;
                }
                let c =
                    Candidate { seller: seller.firm_id, buyer: buyer.firm_id, seller_value, buyer_value, reservation };
                let better = match &best {
                    None => true,
                    Some(b) => {
                        (c.gap(), std::cmp::Reverse(c.buyer), std::cmp::Reverse(c.seller))
                            > (b.gap(), std::cmp::Reverse(b.buyer), std::cmp::Reverse(b.seller))
                    }
                };
                if better {
                    best = Some(c);
                }
            }
        }
        let Some(c) = best else { break };

        let lo = c.reservation + Money::EPSILON;
        let hi = c.buyer_value - Money::EPSILON;
        let price = c.reservation.lerp(c.buyer_value, rules.beta).clamp(lo, hi);
        trades.push(TradeRecord {
            seller: c.seller,
            buyer: c.buyer,
            price,
            seller_value: c.seller_value,
            buyer_value: c.buyer_value,
            rent: price - c.reservation,
        });
        *held.get_mut(&c.seller).expect("seller present") -= 1;
        *held.get_mut(&c.buyer).expect("buyer present") += 1;
        costs.pop(c.seller);
        costs.push(c.buyer, price);
    }

    let final_allocation: Allocation = held.into_iter().collect();
    let surplus_gain = total_surplus(&final_allocation, profiles) - total_surplus(initial, profiles);
    Ok(SecondaryResult {
        total_rent: trades.iter().map(|t| t.rent).sum(),
        final_allocation,
        trades,
        surplus_gain,
        final_costs: costs,
    })
}

/// Resale receipts minus auction payments. Units the speculator keeps are
/// worth nothing to it.
pub fn speculator_resale_profit(result: &SecondaryResult, auction: &AuctionOutcome, speculator: FirmId) -> Money {
    result.receipts(speculator) - result.purchases(speculator) - auction.payment(speculator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::{clear_auction, efficient_allocation, AuctionRules};
    use crate::model::BidSchedule;
    use crate::worked_example as ex;

    fn m(x: f64) -> Money {
        Money::from_f64(x)
    }

    fn with_speculator(polluters: Vec<BidSchedule>, bid: f64) -> AuctionOutcome {
        let mut schedules = polluters;
        schedules.push(BidSchedule::new(ex::SPECULATOR, vec![m(bid), m(0.0)]));
        clear_auction(&schedules, &ex::all_profiles(), &AuctionRules::new(4)).unwrap()
    }

    #[test]
    fn moderate_case_speculator_resells_to_second_bidder() {
        let auction = with_speculator(ex::moderate_reduction_bids(), 6.5);
        let costs = AcquisitionCosts::from_auction(&auction);
        let rules = SecondaryRules { beta: 0.5, cost_floor: true };
        let res = run_secondary(&auction.allocation, &ex::all_profiles(), &rules, Some(&costs)).unwrap();
        assert_eq!(res.trades.len(), 1);
        let t = res.trades[0];
        assert_eq!((t.seller, t.buyer), (ex::SPECULATOR, FirmId(2)));
        assert_eq!(t.price, m(6.5));
        // buyer gain plus the speculator's gain net of its cost of 6
        assert_eq!((t.buyer_value - t.price) + (t.price - auction.clearing_price), m(1.0));
        assert_eq!(speculator_resale_profit(&res, &auction, ex::SPECULATOR), m(0.5));
        assert_eq!(res.total_rent, m(0.5));
    }

    #[test]
    fn moderate_case_without_floor_sells_at_a_loss() {
        let auction = with_speculator(ex::moderate_reduction_bids(), 6.5);
        let res = run_secondary(&auction.allocation, &ex::all_profiles(), &SecondaryRules::default(), None).unwrap();
        assert_eq!(res.trades.len(), 1);
        assert_eq!(res.trades[0].price, m(3.5));
        assert_eq!(speculator_resale_profit(&res, &auction, ex::SPECULATOR), m(-2.5));
    }

    #[test]
    fn deep_case_speculator_trade_then_polluter_trade() {
        let auction = with_speculator(ex::deep_reduction_bids(), 6.0);
        let res = run_secondary(&auction.allocation, &ex::all_profiles(), &SecondaryRules::default(), None).unwrap();
        let first = res.trades[0];
        assert_eq!((first.seller, first.buyer), (ex::SPECULATOR, FirmId(1)));
        assert_eq!(first.buyer_value - first.seller_value, m(9.0));
        assert_eq!(first.buyer_value - auction.clearing_price, m(4.0));
        // firm 3's unit worth 6 then moves to firm 2, who values its next unit at 7
        assert_eq!(res.trades.len(), 2);
        assert_eq!((res.trades[1].seller, res.trades[1].buyer), (FirmId(3), FirmId(2)));
        assert_eq!(res.surplus_gain, m(10.0));
        assert!(res.final_allocation.same_holdings(&efficient_allocation(&ex::all_profiles(), 4)));
    }

    #[test]
    fn efficient_start_is_a_fixed_point() {
        let alloc = efficient_allocation(&ex::polluter_profiles(), 4);
        let res = run_secondary(&alloc, &ex::polluter_profiles(), &SecondaryRules::default(), None).unwrap();
        assert!(res.trades.is_empty());
        assert_eq!(res.total_rent, Money::ZERO);
        assert_eq!(res.surplus_gain, Money::ZERO);
    }

    #[test]
    fn speculator_without_units_earns_nothing() {
        let auction = with_speculator(ex::moderate_reduction_bids(), 0.0);
        let res = run_secondary(&auction.allocation, &ex::all_profiles(), &SecondaryRules::default(), None).unwrap();
        assert_eq!(speculator_resale_profit(&res, &auction, ex::SPECULATOR), Money::ZERO);
    }

    #[test]
    fn beta_must_be_interior() {
        let alloc = Allocation::new();
        for beta in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            let rules = SecondaryRules { beta, cost_floor: false };
            assert!(matches!(
                run_secondary(&alloc, &ex::polluter_profiles(), &rules, None),
                Err(SecondaryError::InvalidBeta(_))
            ));
        }
    }

    #[test]
    fn overfull_allocation_rejected() {
        let alloc: Allocation = [(FirmId(1), 3)].into_iter().collect();
        assert!(matches!(
            run_secondary(&alloc, &ex::polluter_profiles(), &SecondaryRules::default(), None),
            Err(SecondaryError::InvalidAllocation { .. })
        ));
    }
}
