//! Replays the worked example and compares it with the published figures.

use std::fmt::Write as _;

use ets_core::auction::{clear_auction, AuctionRules};
use ets_core::model::{BidSchedule, FirmId};
use ets_core::secondary::{run_secondary, AcquisitionCosts, SecondaryRules, TradeRecord};
use ets_core::worked_example as ex;
use ets_core::Money;
use serde::Serialize;

use crate::CliError;

/// Published price, bidder surplus, revenue and per-bidder payoffs.
pub struct ExpectedRow {
    pub price: f64,
    pub surplus: f64,
    pub revenue: f64,
    pub payoffs: [f64; 4],
}

pub const EXPECTED: [ExpectedRow; 5] = [
    ExpectedRow { price: 6.0, surplus: 10.0, revenue: 24.0, payoffs: [7.0, 3.0, 0.0, 0.0] },
    ExpectedRow { price: 5.0, surplus: 13.0, revenue: 20.0, payoffs: [9.0, 3.0, 1.0, 0.0] },
    ExpectedRow { price: 6.0, surplus: 9.0, revenue: 24.0, payoffs: [7.0, 2.0, 0.0, 0.0] },
    ExpectedRow { price: 4.0, surplus: 17.0, revenue: 16.0, payoffs: [11.0, 4.0, 2.0, 0.0] },
    ExpectedRow { price: 5.0, surplus: 9.0, revenue: 20.0, payoffs: [5.0, 3.0, 1.0, 0.0] },
];

#[derive(Debug, Clone, Serialize)]
pub struct ReplayRow {
    pub label: String,
    pub bids: Vec<Vec<Money>>,
    pub clearing_price: Money,
    pub bidder_surplus: Money,
    pub revenue: Money,
    pub payoffs: Vec<Money>,
}

/// Resale of the speculator's unit after one of the reduced-bid rows.
#[derive(Debug, Clone, Serialize)]
pub struct Epilogue {
    pub label: String,
    pub trade: TradeRecord,
    /// Buyer value less what the speculator paid in the auction.
    pub netted_gain: Money,
    /// Buyer value less seller value.
    pub holder_value_gain: Money,
    pub speculator_profit: Money,
    /// Gain from running the resale market to completion, all trades.
    pub full_market_gain: Money,
    pub net_surplus_before: Money,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub rows: Vec<ReplayRow>,
    pub epilogues: Vec<Epilogue>,
    pub mismatches: Vec<String>,
}

fn run_row(s: &ex::ExampleScenario) -> Result<ReplayRow, CliError> {
    let mut schedules = s.polluter_bids.clone();
    schedules.extend(s.speculator_bids.clone());
    let profiles = ex::all_profiles();
    let out = clear_auction(&schedules, &profiles, &AuctionRules::new(ex::K)).map_err(ets_core::Error::from)?;
    let payoffs: Vec<Money> =
        (1..=4).map(|i| out.per_firm_surplus.get(&FirmId(i)).copied().unwrap_or_default()).collect();
    // The speculator has no use value, so the surplus column covers polluters only.
    Ok(ReplayRow {
        label: s.label.to_string(),
        bids: schedules.iter().map(|b| b.bids.clone()).collect(),
        clearing_price: out.clearing_price,
        bidder_surplus: payoffs.iter().sum(),
        revenue: out.revenue,
        payoffs,
    })
}

fn epilogue(label: &str, polluters: Vec<BidSchedule>, bid: f64) -> Result<Epilogue, CliError> {
    let profiles = ex::all_profiles();
    let mut schedules = polluters;
    schedules.push(BidSchedule::new(ex::SPECULATOR, vec![Money::from_f64(bid)]));
    let out = clear_auction(&schedules, &profiles, &AuctionRules::new(ex::K)).map_err(ets_core::Error::from)?;
    let costs = AcquisitionCosts::from_auction(&out);
    let rules = SecondaryRules { beta: 0.5, cost_floor: true };
    let res = run_secondary(&out.allocation, &profiles, &rules, Some(&costs)).map_err(ets_core::Error::from)?;
    let trade = res
        .trades
        .iter()
        .find(|t| t.seller == ex::SPECULATOR)
        .cloned()
        .ok_or_else(|| CliError::GoldenMismatch(vec![format!("{label}: speculator did not resell")]))?;
    let net_surplus_before = profiles
        .iter()
        .filter(|p| !p.is_speculator())
        .map(|p| p.value_of(out.allocation.units(p.firm_id)))
        .sum::<Money>()
        + out.payment(ex::SPECULATOR);
    Ok(Epilogue {
        label: label.to_string(),
        netted_gain: trade.buyer_value - out.clearing_price,
        holder_value_gain: trade.buyer_value - trade.seller_value,
        speculator_profit: trade.price - out.clearing_price,
        full_market_gain: res.surplus_gain,
        net_surplus_before,
        trade,
    })
}

fn check(mismatches: &mut Vec<String>, what: String, got: Money, want: f64) {
    if got != Money::from_f64(want) {
        mismatches.push(format!("{what}: computed {got}, expected {want}"));
    }
}

pub fn replay() -> Result<ReplayReport, CliError> {
    let mut rows = Vec::new();
    let mut mismatches = Vec::new();
    for (s, want) in ex::scenarios().iter().zip(EXPECTED.iter()) {
        let row = run_row(s)?;
        check(&mut mismatches, format!("{} price", row.label), row.clearing_price, want.price);
        check(&mut mismatches, format!("{} surplus", row.label), row.bidder_surplus, want.surplus);
        check(&mut mismatches, format!("{} revenue", row.label), row.revenue, want.revenue);
        for (i, (got, w)) in row.payoffs.iter().zip(want.payoffs).enumerate() {
            check(&mut mismatches, format!("{} payoff B{}", row.label, i + 1), *got, w);
        }
        rows.push(row);
    }

    let moderate = epilogue("moderate reduction + speculator", ex::moderate_reduction_bids(), 6.5)?;
    check(&mut mismatches, format!("{} netted gain", moderate.label), moderate.netted_gain, 1.0);
    let deep = epilogue("deep reduction + speculator", ex::deep_reduction_bids(), 6.0)?;
    check(&mut mismatches, format!("{} net surplus", deep.label), deep.net_surplus_before, 29.0);
    check(&mut mismatches, format!("{} netted gain", deep.label), deep.netted_gain, 4.0);
    check(&mut mismatches, format!("{} holder-value gain", deep.label), deep.holder_value_gain, 9.0);

    Ok(ReplayReport { rows, epilogues: vec![moderate, deep], mismatches })
}

fn pair(bids: &[Money]) -> String {
    bids.iter().map(Money::to_string).collect::<Vec<_>>().join(",")
}

pub fn render(report: &ReplayReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<34} {:>7} {:>7} {:>7} {:>7} {:>9} {:>6} {:>6} {:>6} {:>6}",
        "scenario", "B1", "B2", "B3", "B4", "s", "p*", "Surp.", "Rev.", "pay"
    );
    for r in &report.rows {
        let spec = r.bids.get(4).map_or("-".to_string(), |b| pair(b));
        let _ = writeln!(
            s,
            "{:<34} {:>7} {:>7} {:>7} {:>7} {:>9} {:>6} {:>6} {:>6} {}",
            r.label,
            pair(&r.bids[0]),
            pair(&r.bids[1]),
            pair(&r.bids[2]),
            pair(&r.bids[3]),
            spec,
            r.clearing_price,
            r.bidder_surplus,
            r.revenue,
            pair(&r.payoffs),
        );
    }
    for e in &report.epilogues {
        let _ = writeln!(
            s,
            "resale after {}: B{} buys from speculator at {} (buyer value {}); netted gain {}, holder-value gain {}, \
             speculator profit {}; full resale gain {}",
            e.label,
            e.trade.buyer,
            e.trade.price,
            e.trade.buyer_value,
            e.netted_gain,
            e.holder_value_gain,
            e.speculator_profit,
            e.full_market_gain,
        );
    }
    s
}
