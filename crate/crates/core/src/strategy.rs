//! Bidding behaviors: maps from private values to demand schedules.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::AuctionRules;
use crate::model::{sample_profiles, BidSchedule, FirmId, MarketConfig, ModelError, ValuationProfile};
use crate::money::Money;
use crate::rng::SeedStream;
use crate::secondary::SecondaryRules;
use crate::settlement::settle;
use crate::Error;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StrategyError {
    #[error("firm {firm}: {factors} shading factors for {units} units")]
    FactorLengthMismatch { firm: FirmId, factors: usize, units: usize },
    #[error("firm {firm}: shading factor {factor} outside [0, 1]")]
    FactorOutOfRange { firm: FirmId, factor: f64 },
    #[error("firm {firm}: shaded bids increase at unit {index} and clamping is off")]
    ResultNotMonotone { firm: FirmId, index: usize },
    #[error("extra shade {0} outside [0, 1]")]
    ShadeOutOfRange(f64),
    #[error("speculator bid grid is empty")]
    EmptyGrid,
    #[error("speculator needs at least one Monte Carlo sample")]
    NoSamples,
    #[error("speculator must demand between 1 and {k} units, got {got}")]
    BadUnitCount { got: usize, k: usize },
    #[error("firm {0}: a speculator grid strategy needs the market context")]
    NeedsMarketContext(FirmId),
    #[error(transparent)]
    InvalidSchedule(#[from] ModelError),
}

fn default_units() -> usize {
    1
}

fn default_samples() -> usize {
    64
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeculatorGrid {
    pub bid_grid: Vec<Money>,
    #[serde(default = "default_units")]
    pub units_demanded: usize,
    #[serde(default = "default_samples")]
    pub mc_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    Truthful,
    /// Per-unit multipliers on value. Later units usually get deeper cuts.
    Shaded {
        factors: Vec<f64>,
        #[serde(default = "yes")]
        clamp: bool,
    },
    /// The base behavior scaled down by `1 - extra_shade` in anticipation of
    /// resale opportunities.
    SecondaryAware {
        base: Box<StrategySpec>,
        extra_shade: f64,
    },
    SpeculatorGrid(SpeculatorGrid),
    FixedBids {
        bids: Vec<Money>,
    },
}

pub fn truthful_schedule(profile: &ValuationProfile) -> BidSchedule {
    BidSchedule::new(profile.firm_id, profile.values.clone())
}

/// `values[u] * factors[u]`, then optionally clamped so each bid is no
/// higher than the one before it.
pub fn shaded_schedule(profile: &ValuationProfile, factors: &[f64], clamp: bool) -> Result<BidSchedule, StrategyError> {
    let firm = profile.firm_id;
    if factors.len() != profile.units() {
        return Err(StrategyError::FactorLengthMismatch { firm, factors: factors.len(), units: profile.units() });
    }
    if let Some(&factor) = factors.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(StrategyError::FactorOutOfRange { firm, factor });
    }
    let mut bids: Vec<Money> = profile.values.iter().zip(factors).map(|(v, f)| v.scale(*f)).collect();
    for u in 1..bids.len() {
        if bids[u] > bids[u - 1] {
            if !clamp {
                return Err(StrategyError::ResultNotMonotone { firm, index: u });
            }
            bids[u] = bids[u - 1];
        }
    }
    Ok(BidSchedule::new(firm, bids))
}

pub fn secondary_aware_schedule(
    base: &StrategySpec,
    extra_shade: f64,
    profile: &ValuationProfile,
    k: usize,
) -> Result<BidSchedule, StrategyError> {
    if !(0.0..=1.0).contains(&extra_shade) {
        return Err(StrategyError::ShadeOutOfRange(extra_shade));
    }
    let mut schedule = static_schedule(base, profile, k)?;
    for b in &mut schedule.bids {
        *b = b.scale(1.0 - extra_shade);
    }
    Ok(schedule)
}

/// Schedules for every strategy that depends only on the firm's own values.
pub fn static_schedule(
    spec: &StrategySpec,
    profile: &ValuationProfile,
    k: usize,
) -> Result<BidSchedule, StrategyError> {
    let schedule = match spec {
        StrategySpec::Truthful => truthful_schedule(profile),
        StrategySpec::Shaded { factors, clamp } => shaded_schedule(profile, factors, *clamp)?,
        StrategySpec::SecondaryAware { base, extra_shade } => secondary_aware_schedule(base, *extra_shade, profile, k)?,
        StrategySpec::FixedBids { bids } => BidSchedule::new(profile.firm_id, bids.clone()),
        StrategySpec::SpeculatorGrid(_) => return Err(StrategyError::NeedsMarketContext(profile.firm_id)),
    };
    schedule.validate(k)?;
    Ok(schedule)
}

/// Strategy per firm with a fallback for unlisted firms. Serialized as a map
/// from firm id (or `"default"`) to strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, StrategySpec>", into = "BTreeMap<String, StrategySpec>")]
pub struct StrategyAssignment {
    pub default: StrategySpec,
    pub per_firm: BTreeMap<FirmId, StrategySpec>,
}

impl Default for StrategyAssignment {
    fn default() -> Self {
        StrategyAssignment { default: StrategySpec::Truthful, per_firm: BTreeMap::new() }
    }
}

impl StrategyAssignment {
    pub fn uniform(spec: StrategySpec) -> Self {
        StrategyAssignment { default: spec, per_firm: BTreeMap::new() }
    }

    pub fn with(mut self, firm: FirmId, spec: StrategySpec) -> Self {
        self.per_firm.insert(firm, spec);
        self
    }

    pub fn spec_for(&self, firm: FirmId) -> &StrategySpec {
        self.per_firm.get(&firm).unwrap_or(&self.default)
    }
}

impl TryFrom<BTreeMap<String, StrategySpec>> for StrategyAssignment {
    type Error = String;

    fn try_from(mut map: BTreeMap<String, StrategySpec>) -> Result<Self, Self::Error> {
        let default = map.remove("default").unwrap_or(StrategySpec::Truthful);
        let per_firm = map
            .into_iter()
            .map(|(key, spec)| {
                key.parse::<u32>()
                    .map(|id| (FirmId(id), spec))
                    .map_err(|_| format!("strategy key `{key}` is neither a firm id nor \"default\""))
            })
            .collect::<Result<_, _>>()?;
        Ok(StrategyAssignment { default, per_firm })
    }
}

impl From<StrategyAssignment> for BTreeMap<String, StrategySpec> {
    fn from(a: StrategyAssignment) -> Self {
        let mut map: BTreeMap<String, StrategySpec> = a.per_firm.into_iter().map(|(f, s)| (f.to_string(), s)).collect();
        map.insert("default".into(), a.default);
        map
    }
}

/// What the speculator knows when it picks a bid: the value distribution,
/// the rivals' behaviors, and the market rules.
#[derive(Debug, Clone, Copy)]
pub struct SpeculatorContext<'a> {
    pub market: &'a MarketConfig,
    pub strategies: &'a StrategyAssignment,
    pub auction: AuctionRules,
    pub secondary: Option<SecondaryRules>,
    pub speculator: FirmId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeculatorPlan {
    pub schedule: BidSchedule,
    pub expected_profit: Money,
}

/// Picks the grid bid with the highest Monte Carlo estimate of auction plus
/// resale profit. Every candidate is scored on the same sampled rival
/// markets; ties go to the lowest bid.
pub fn speculator_schedule(
    grid: &SpeculatorGrid,
    ctx: &SpeculatorContext<'_>,
    stream: &SeedStream,
) -> Result<SpeculatorPlan, Error> {
    if grid.bid_grid.is_empty() {
        return Err(StrategyError::EmptyGrid.into());
    }
    if grid.mc_samples == 0 {
        return Err(StrategyError::NoSamples.into());
    }
    if grid.units_demanded == 0 || grid.units_demanded > ctx.auction.k {
        return Err(StrategyError::BadUnitCount { got: grid.units_demanded, k: ctx.auction.k }.into());
    }

    let markets = (0..grid.mc_samples as u64)
        .map(|j| {
            let mut profiles: Vec<ValuationProfile> = sample_profiles(ctx.market, &stream.derive("mc", j))
                .into_iter()
                .filter(|p| p.firm_id != ctx.speculator && !p.is_speculator())
                .collect();
            let schedules = profiles
                .iter()
                .map(|p| static_schedule(ctx.strategies.spec_for(p.firm_id), p, ctx.auction.k))
                .collect::<Result<Vec<_>, _>>()?;
            profiles.push(ValuationProfile::speculator(ctx.speculator, grid.units_demanded));
            Ok((profiles, schedules))
        })
        .collect::<Result<Vec<_>, Error>>()?;

    let scores = grid
        .bid_grid
        .par_iter()
        .map(|&bid| {
            let mine = BidSchedule::new(ctx.speculator, vec![bid; grid.units_demanded]);
            let mut total = Money::ZERO;
            for (profiles, rivals) in &markets {
                let mut schedules = rivals.clone();
                schedules.push(mine.clone());
                let s = settle(&schedules, profiles, &ctx.auction, ctx.secondary.as_ref())?;
                total += s.payoff(ctx.speculator, profiles);
            }
            Ok((bid, total))
        })
        .collect::<Result<Vec<_>, Error>>()?;

    let (bid, total) = scores.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).expect("grid is non-empty");
    Ok(SpeculatorPlan {
        schedule: BidSchedule::new(ctx.speculator, vec![bid; grid.units_demanded]),
        expected_profit: Money::from_nanos(total.nanos() / grid.mc_samples as i64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DemandShape, ValueDistribution};
    use crate::worked_example as ex;

    fn m(x: f64) -> Money {
        Money::from_f64(x)
    }

    fn b1() -> ValuationProfile {
        ex::polluter_profiles()[0].clone()
    }

    #[test]
    fn truthful_is_identity() {
        assert_eq!(truthful_schedule(&b1()).bids, vec![m(10.0), m(9.0)]);
        let spec = ValuationProfile::speculator(FirmId(5), 2);
        assert_eq!(truthful_schedule(&spec).bids, vec![m(0.0), m(0.0)]);
        let rows: Vec<_> = ex::polluter_profiles().iter().map(truthful_schedule).collect();
        assert_eq!(rows, ex::truthful_bids());
    }

    #[test]
    fn shading_reproduces_example_bids() {
        assert_eq!(shaded_schedule(&b1(), &[1.0, 7.0 / 9.0], true).unwrap().bids, vec![m(10.0), m(7.0)]);
        assert_eq!(shaded_schedule(&b1(), &[1.0, 5.0 / 9.0], true).unwrap().bids, vec![m(10.0), m(5.0)]);
        assert_eq!(shaded_schedule(&b1(), &[1.0, 1.0], true).unwrap(), truthful_schedule(&b1()));
    }

    #[test]
    fn shading_clamps_or_rejects() {
        let flat = ValuationProfile::polluter(FirmId(1), vec![m(10.0), m(10.0)]);
        assert_eq!(shaded_schedule(&flat, &[0.5, 0.9], true).unwrap().bids, vec![m(5.0), m(5.0)]);
        assert!(matches!(
            shaded_schedule(&flat, &[0.5, 0.9], false),
            Err(StrategyError::ResultNotMonotone { index: 1, .. })
        ));
        assert!(matches!(shaded_schedule(&flat, &[0.5], true), Err(StrategyError::FactorLengthMismatch { .. })));
        assert!(matches!(shaded_schedule(&flat, &[1.2, 0.5], true), Err(StrategyError::FactorOutOfRange { .. })));
    }

    #[test]
    fn secondary_aware_scaling() {
        let truthful = StrategySpec::Truthful;
        assert_eq!(secondary_aware_schedule(&truthful, 0.0, &b1(), 2).unwrap().bids, vec![m(10.0), m(9.0)]);
        assert_eq!(secondary_aware_schedule(&truthful, 0.1, &b1(), 2).unwrap().bids, vec![m(9.0), m(8.1)]);
        assert!(matches!(secondary_aware_schedule(&truthful, 1.5, &b1(), 2), Err(StrategyError::ShadeOutOfRange(_))));
    }

    #[test]
    fn grid_strategy_needs_context() {
        let spec =
            StrategySpec::SpeculatorGrid(SpeculatorGrid { bid_grid: vec![m(1.0)], units_demanded: 1, mc_samples: 1 });
        assert!(matches!(static_schedule(&spec, &b1(), 2), Err(StrategyError::NeedsMarketContext(_))));
    }

    #[test]
    fn assignment_serde() {
        let json = r#"{"default":{"kind":"truthful"},"5":{"kind":"fixed_bids","bids":[6.5]}}"#;
        let a: StrategyAssignment = serde_json::from_str(json).unwrap();
        assert_eq!(a.spec_for(FirmId(5)), &StrategySpec::FixedBids { bids: vec![m(6.5)] });
        assert_eq!(a.spec_for(FirmId(1)), &StrategySpec::Truthful);
        let back: StrategyAssignment = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<StrategyAssignment>(r#"{"x":{"kind":"truthful"}}"#).is_err());
    }

    fn example_market() -> MarketConfig {
        MarketConfig {
            n: 5,
            k: 4,
            distribution: ValueDistribution::Fixed { profiles: ex::true_values() },
            speculator_present: true,
            seed: 1,
            units_per_firm: None,
            demand_shape: DemandShape::Declining,
        }
    }

    fn fixed_assignment(schedules: Vec<BidSchedule>) -> StrategyAssignment {
        let mut a = StrategyAssignment::default();
        for s in schedules {
            a.per_firm.insert(s.firm_id, StrategySpec::FixedBids { bids: s.bids });
        }
        a
    }

    #[test]
    fn speculator_enters_against_reduced_bids_with_cost_floor() {
        let market = example_market();
        let strategies = fixed_assignment(ex::moderate_reduction_bids());
        let ctx = SpeculatorContext {
            market: &market,
            strategies: &strategies,
            auction: AuctionRules::new(4),
            secondary: Some(SecondaryRules { beta: 0.5, cost_floor: true }),
            speculator: ex::SPECULATOR,
        };
        let grid = SpeculatorGrid { bid_grid: vec![m(0.0), m(6.5)], units_demanded: 1, mc_samples: 3 };
        let plan = speculator_schedule(&grid, &ctx, &SeedStream::root(9)).unwrap();
        assert_eq!(plan.schedule.bids, vec![m(6.5)]);
        assert_eq!(plan.expected_profit, m(0.5));

        let zero_only = SpeculatorGrid { bid_grid: vec![m(0.0)], units_demanded: 1, mc_samples: 1 };
        let plan = speculator_schedule(&zero_only, &ctx, &SeedStream::root(9)).unwrap();
        assert_eq!(plan.schedule.bids, vec![m(0.0)]);
        assert_eq!(plan.expected_profit, Money::ZERO);
    }

    #[test]
    fn speculator_stays_out_against_truthful_bidders() {
        let market = example_market();
        let strategies = StrategyAssignment::default();
        let grid = SpeculatorGrid {
            bid_grid: (0..=20).map(|i| m(i as f64 * 0.5)).collect(),
            units_demanded: 1,
            mc_samples: 1,
        };
        for secondary in
            [SecondaryRules { beta: 0.5, cost_floor: false }, SecondaryRules { beta: 0.5, cost_floor: true }]
        {
            let ctx = SpeculatorContext {
                market: &market,
                strategies: &strategies,
                auction: AuctionRules::new(4),
                secondary: Some(secondary),
                speculator: ex::SPECULATOR,
            };
            let plan = speculator_schedule(&grid, &ctx, &SeedStream::root(3)).unwrap();
            assert!(plan.expected_profit <= Money::ZERO);
            assert_eq!(plan.schedule.bids, vec![m(0.0)]);
        }
    }

    #[test]
    fn speculator_choice_is_deterministic() {
        let market = MarketConfig {
            n: 4,
            k: 2,
            distribution: ValueDistribution::Uniform { lo: m(0.0), hi: m(10.0) },
            speculator_present: true,
            seed: 5,
            units_per_firm: None,
            demand_shape: DemandShape::Declining,
        };
        let strategies = StrategyAssignment::uniform(StrategySpec::Shaded { factors: vec![1.0, 0.5], clamp: true });
        let ctx = SpeculatorContext {
            market: &market,
            strategies: &strategies,
            auction: AuctionRules::new(2),
            secondary: Some(SecondaryRules { beta: 0.5, cost_floor: true }),
            speculator: FirmId(4),
        };
        let grid =
            SpeculatorGrid { bid_grid: (0..=10).map(|i| m(i as f64)).collect(), units_demanded: 1, mc_samples: 50 };
        let a = speculator_schedule(&grid, &ctx, &SeedStream::root(11)).unwrap();
        let b = speculator_schedule(&grid, &ctx, &SeedStream::root(11)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            speculator_schedule(
                &SpeculatorGrid { bid_grid: vec![], units_demanded: 1, mc_samples: 1 },
                &ctx,
                &SeedStream::root(1)
            ),
            Err(Error::Strategy(StrategyError::EmptyGrid))
        ));
    }
}
