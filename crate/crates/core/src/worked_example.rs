//! The four-bidder, four-permit worked example: true values, two levels of
//! demand reduction, and a speculator entering each reduced market.

use crate::model::{BidSchedule, FirmId, ValuationProfile};
use crate::money::Money;

pub const K: usize = 4;
pub const SPECULATOR: FirmId = FirmId(5);

fn m(x: f64) -> Money {
    Money::from_f64(x)
}

fn rows(pairs: [(f64, f64); 4]) -> Vec<Vec<Money>> {
    pairs.iter().map(|&(a, b)| vec![m(a), m(b)]).collect()
}

pub fn true_values() -> Vec<Vec<Money>> {
    rows([(10.0, 9.0), (8.0, 7.0), (6.0, 5.0), (4.0, 3.0)])
}

pub fn polluter_profiles() -> Vec<ValuationProfile> {
    true_values().into_iter().enumerate().map(|(i, v)| ValuationProfile::polluter(FirmId(i as u32 + 1), v)).collect()
}

/// Polluters plus the zero-value speculator (firm 5).
pub fn all_profiles() -> Vec<ValuationProfile> {
    let mut p = polluter_profiles();
    p.push(ValuationProfile::speculator(SPECULATOR, 2));
    p
}

fn schedules(bids: Vec<Vec<Money>>) -> Vec<BidSchedule> {
    bids.into_iter().enumerate().map(|(i, b)| BidSchedule::new(FirmId(i as u32 + 1), b)).collect()
}

pub fn truthful_bids() -> Vec<BidSchedule> {
    schedules(true_values())
}

pub fn moderate_reduction_bids() -> Vec<BidSchedule> {
    schedules(rows([(10.0, 7.0), (8.0, 5.0), (6.0, 4.0), (4.0, 2.0)]))
}

pub fn deep_reduction_bids() -> Vec<BidSchedule> {
    schedules(rows([(10.0, 5.0), (8.0, 4.0), (6.0, 3.0), (4.0, 2.0)]))
}

/// One row of the example: polluter bids and an optional speculator bid.
#[derive(Debug, Clone)]
pub struct ExampleScenario {
    pub label: &'static str,
    pub polluter_bids: Vec<BidSchedule>,
    pub speculator_bids: Option<BidSchedule>,
}

impl ExampleScenario {
    pub fn schedules(&self) -> Vec<BidSchedule> {
        let mut s = self.polluter_bids.clone();
        s.extend(self.speculator_bids.clone());
        s
    }
}

pub fn scenarios() -> Vec<ExampleScenario> {
    vec![
        ExampleScenario { label: "truthful", polluter_bids: truthful_bids(), speculator_bids: None },
        ExampleScenario { label: "reduced", polluter_bids: moderate_reduction_bids(), speculator_bids: None },
        ExampleScenario {
            label: "reduced + speculator",
            polluter_bids: moderate_reduction_bids(),
            speculator_bids: Some(BidSchedule::new(SPECULATOR, vec![m(6.5), m(0.0)])),
        },
        ExampleScenario { label: "deeply reduced", polluter_bids: deep_reduction_bids(), speculator_bids: None },
        ExampleScenario {
            label: "deeply reduced + speculator",
            polluter_bids: deep_reduction_bids(),
            speculator_bids: Some(BidSchedule::new(SPECULATOR, vec![m(6.0), m(0.0)])),
        },
    ]
}
