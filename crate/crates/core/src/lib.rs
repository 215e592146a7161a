//! Emission-permit market simulation.
//!
//! Firms buy permits in a sealed-bid uniform-price auction and may then
//! trade them in a secondary resale market. The crate provides the clearing
//! rules, a library of bidding behaviors, multi-round simulation with permit
//! banking, and brute-force oracles that check welfare and pricing
//! properties on small instances.

pub mod auction;
pub mod model;
pub mod money;
pub mod oracle;
pub mod rng;
pub mod scenario;
pub mod secondary;
pub mod settlement;
pub mod simulation;
pub mod strategy;
pub mod worked_example;

pub use auction::{
    clear_auction, efficient_allocation, surplus_decomposition, total_surplus, Allocation, AuctionOutcome,
    AuctionRules, PricingRule,
};
pub use model::{BidSchedule, FirmId, FirmKind, MarketConfig, ValuationProfile, ValueDistribution};
pub use money::Money;
pub use rng::SeedStream;
pub use secondary::{run_secondary, SecondaryResult, SecondaryRules, TradeRecord};
pub use strategy::{StrategyAssignment, StrategySpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Auction(#[from] auction::AuctionError),
    #[error(transparent)]
    Secondary(#[from] secondary::SecondaryError),
    #[error(transparent)]
    Strategy(#[from] strategy::StrategyError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
}
