//! One pass through the market: auction, then optional resale.

use serde::{Deserialize, Serialize};

use crate::auction::{clear_auction, Allocation, AuctionOutcome, AuctionRules};
use crate::model::{find_profile, BidSchedule, FirmId, ValuationProfile};
use crate::money::Money;
use crate::secondary::{run_secondary, AcquisitionCosts, SecondaryResult, SecondaryRules};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub auction: AuctionOutcome,
    pub secondary: Option<SecondaryResult>,
}

pub fn settle(
    schedules: &[BidSchedule],
    profiles: &[ValuationProfile],
    rules: &AuctionRules,
    secondary: Option<&SecondaryRules>,
) -> Result<Settlement, Error> {
    let auction = clear_auction(schedules, profiles, rules)?;
    let secondary = match secondary {
        Some(sr) => {
            let costs = AcquisitionCosts::from_auction(&auction);
            Some(run_secondary(&auction.allocation, profiles, sr, Some(&costs))?)
        }
        None => None,
    };
    Ok(Settlement { auction, secondary })
}

impl Settlement {
    pub fn final_allocation(&self) -> &Allocation {
        self.secondary.as_ref().map_or(&self.auction.allocation, |s| &s.final_allocation)
    }

    /// Value of the firm's final holdings less everything it paid, plus
    /// resale receipts.
    pub fn payoff(&self, firm: FirmId, profiles: &[ValuationProfile]) -> Money {
        let held = self.final_allocation().units(firm);
        let value = find_profile(profiles, firm).map_or(Money::ZERO, |p| p.value_of(held));
        let resale = self.secondary.as_ref().map_or(Money::ZERO, |s| s.receipts(firm) - s.purchases(firm));
        value - self.auction.payment(firm) + resale
    }
}
