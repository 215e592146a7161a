//! Repeated auction rounds with optional resale and permit banking, run over
//! independent replications.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{clear_auction, efficient_allocation, total_surplus, Allocation, AuctionOutcome};
use crate::model::{sample_profiles, BidSchedule, FirmId, ValuationProfile};
use crate::money::Money;
use crate::rng::SeedStream;
use crate::scenario::ScenarioConfig;
use crate::secondary::{run_secondary, AcquisitionCosts, SecondaryResult};
use crate::strategy::{speculator_schedule, static_schedule, SpeculatorContext, StrategySpec};
use crate::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarryMode {
    /// Banked units cover the firm's highest-value needs next round and are
    /// removed from the head of its demand.
    #[default]
    ReduceDemand,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankingPolicy {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub cap_per_firm: usize,
    #[serde(default)]
    pub carry_mode: CarryMode,
}

/// Units carried between rounds, with what each one cost.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankState {
    units: BTreeMap<FirmId, Vec<Money>>,
}

impl BankState {
    pub fn units(&self, firm: FirmId) -> usize {
        self.units.get(&firm).map_or(0, Vec::len)
    }

    pub fn counts(&self) -> BTreeMap<FirmId, usize> {
        self.units.iter().map(|(f, c)| (*f, c.len())).filter(|(_, n)| *n > 0).collect()
    }

    pub fn total(&self) -> usize {
        self.units.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub clearing_price: Money,
    pub revenue: Money,
    /// Auction surplus of polluters only.
    pub bidder_surplus: Money,
    pub speculator_profit: Money,
    pub total_rent: Money,
    /// Sum of marginal values over final holdings.
    pub holder_value_surplus: Money,
    /// Polluter holdings at value plus speculator holdings at purchase cost.
    pub net_participant_surplus: Money,
    pub efficiency_ratio: f64,
    pub misallocated_units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round_index: usize,
    pub profiles: Vec<ValuationProfile>,
    pub schedules: Vec<BidSchedule>,
    pub auction: AuctionOutcome,
    pub secondary: Option<SecondaryResult>,
    pub metrics: MetricsRow,
    pub banked_in: BTreeMap<FirmId, usize>,
    pub banked: BTreeMap<FirmId, usize>,
}

fn round_metrics(
    profiles: &[ValuationProfile],
    auction: &AuctionOutcome,
    secondary: Option<&SecondaryResult>,
    holdings: &Allocation,
    costs: &AcquisitionCosts,
) -> MetricsRow {
    let mut bidder_surplus = Money::ZERO;
    let mut speculator_profit = Money::ZERO;
    let mut net_participant_surplus = Money::ZERO;
    for p in profiles {
        let held = holdings.units(p.firm_id);
        if p.is_speculator() {
            let resale = secondary.map_or(Money::ZERO, |s| s.receipts(p.firm_id) - s.purchases(p.firm_id));
            speculator_profit += resale - auction.payment(p.firm_id);
            net_participant_surplus += costs.held(p.firm_id).iter().copied().sum::<Money>();
        } else {
            bidder_surplus += auction.per_firm_surplus.get(&p.firm_id).copied().unwrap_or_default();
            net_participant_surplus += p.value_of(held);
        }
    }

    let holder_value_surplus = total_surplus(holdings, profiles);
    let in_play = holdings.total();
    let benchmark = total_surplus(&efficient_allocation(profiles, in_play), profiles);
    let efficiency_ratio = holder_value_surplus.ratio(benchmark).unwrap_or(1.0).clamp(0.0, 1.0);

    let mut all_values: Vec<Money> = profiles.iter().flat_map(|p| p.values.iter().copied()).collect();
    all_values.sort_unstable_by(|a, b| b.cmp(a));
    let misallocated_units = match in_play.checked_sub(1).and_then(|i| all_values.get(i)) {
        Some(&threshold) => profiles
            .iter()
            .map(|p| p.values[..holdings.units(p.firm_id)].iter().filter(|v| **v < threshold).count())
            .sum(),
        None => 0,
    };

    MetricsRow {
        clearing_price: auction.clearing_price,
        revenue: auction.revenue,
        bidder_surplus,
        speculator_profit,
        total_rent: secondary.map_or(Money::ZERO, |s| s.total_rent),
        holder_value_surplus,
        net_participant_surplus,
        efficiency_ratio,
        misallocated_units,
    }
}

/// One auction round. Banked units occupy the head of each firm's value
/// vector; the firm bids only for the rest. Returns the round and the bank
/// carried into the next one.
pub fn run_round(
    cfg: &ScenarioConfig,
    bank: &BankState,
    stream: &SeedStream,
    round_index: usize,
) -> Result<(RoundResult, BankState), Error> {
    let rules = cfg.auction_rules();
    let profiles = sample_profiles(&cfg.market, stream);
    let banked_in = bank.counts();

    let active: Vec<ValuationProfile> = profiles
        .iter()
        .map(|p| {
            let skip = bank.units(p.firm_id).min(p.units());
            ValuationProfile { values: p.values[skip..].to_vec(), ..p.clone() }
        })
        .collect();

    let mut schedules = Vec::with_capacity(profiles.len());
    for (full, act) in profiles.iter().zip(&active) {
        let firm = full.firm_id;
        let skip = full.units() - act.units();
        let bids = if act.units() == 0 {
            Vec::new()
        } else {
            match cfg.strategies.spec_for(firm) {
                StrategySpec::SpeculatorGrid(grid) => {
                    let mut grid = grid.clone();
                    grid.units_demanded = grid.units_demanded.min(act.units());
                    let ctx = SpeculatorContext {
                        market: &cfg.market,
                        strategies: &cfg.strategies,
                        auction: rules,
                        secondary: cfg.secondary.rules(),
                        speculator: firm,
                    };
                    speculator_schedule(&grid, &ctx, &stream.derive("speculator", u64::from(firm.0)))?.schedule.bids
                }
                spec => {
                    let s = static_schedule(spec, full, rules.k)?;
                    s.bids.into_iter().skip(skip).take(act.units()).collect()
                }
            }
        };
        schedules.push(BidSchedule::new(firm, bids));
    }

    let auction = clear_auction(&schedules, &active, &rules)?;

    let mut holdings = Allocation::new();
    let mut costs = AcquisitionCosts::new();
    for p in &profiles {
        let banked = bank.units.get(&p.firm_id).map_or(&[][..], Vec::as_slice);
        for c in banked {
            costs.push(p.firm_id, *c);
        }
        let won = auction.allocation.units(p.firm_id);
        costs.push_many(p.firm_id, auction.clearing_price, won);
        holdings.set(p.firm_id, banked.len() + won);
    }

    let secondary = match cfg.secondary.rules() {
        Some(sr) => Some(run_secondary(&holdings, &profiles, &sr, Some(&costs))?),
        None => None,
    };
    let (final_holdings, mut final_costs) = match &secondary {
        Some(s) => (s.final_allocation.clone(), s.final_costs.clone()),
        None => (holdings, costs),
    };

    let metrics = round_metrics(&profiles, &auction, secondary.as_ref(), &final_holdings, &final_costs);

    // Units worth no more than this round's price are carried forward.
    let mut next = BankState::default();
    if cfg.banking.enabled && cfg.banking.cap_per_firm > 0 {
        for p in &profiles {
            let held = final_holdings.units(p.firm_id);
            let idle = p.values[..held].iter().filter(|v| **v <= auction.clearing_price).count();
            let carry = idle.min(cfg.banking.cap_per_firm);
            if carry > 0 {
                next.units.insert(p.firm_id, final_costs.take_latest(p.firm_id, carry));
            }
        }
    }

    Ok((
        RoundResult { round_index, profiles, schedules, auction, secondary, metrics, banked_in, banked: next.counts() },
        next,
    ))
}

/// All rounds of one replication, in order.
pub fn run_replication(cfg: &ScenarioConfig, stream: &SeedStream) -> Result<Vec<RoundResult>, Error> {
    let mut bank = BankState::default();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for t in 0..cfg.rounds {
        let (result, next) = run_round(cfg, &bank, &stream.derive("round", t as u64), t)?;
        bank = next;
        rounds.push(result);
    }
    Ok(rounds)
}

pub fn replication_stream(seed: u64, replication: usize) -> SeedStream {
    SeedStream::root(seed).derive("replication", replication as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl FieldStats {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        FieldStats {
            mean,
            std: var.sqrt(),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Sample statistics of every metric over all rounds of all replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: usize,
    pub clearing_price: FieldStats,
    pub revenue: FieldStats,
    pub bidder_surplus: FieldStats,
    pub speculator_profit: FieldStats,
    pub total_rent: FieldStats,
    pub holder_value_surplus: FieldStats,
    pub net_participant_surplus: FieldStats,
    pub efficiency_ratio: FieldStats,
    pub misallocated_units: FieldStats,
}

impl Summary {
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a MetricsRow>) -> Self {
        let rows: Vec<&MetricsRow> = rows.into_iter().collect();
        let money = |f: fn(&MetricsRow) -> Money| {
            FieldStats::from_samples(&rows.iter().map(|r| f(r).to_f64()).collect::<Vec<_>>())
        };
        Summary {
            rows: rows.len(),
            clearing_price: money(|r| r.clearing_price),
            revenue: money(|r| r.revenue),
            bidder_surplus: money(|r| r.bidder_surplus),
            speculator_profit: money(|r| r.speculator_profit),
            total_rent: money(|r| r.total_rent),
            holder_value_surplus: money(|r| r.holder_value_surplus),
            net_participant_surplus: money(|r| r.net_participant_surplus),
            efficiency_ratio: FieldStats::from_samples(&rows.iter().map(|r| r.efficiency_ratio).collect::<Vec<_>>()),
            misallocated_units: FieldStats::from_samples(
                &rows.iter().map(|r| r.misallocated_units as f64).collect::<Vec<_>>(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub replications: Vec<Vec<RoundResult>>,
    pub summary: Summary,
}

/// Runs every replication, in parallel on the current rayon pool. Results
/// are merged in replication order, so output does not depend on the
/// thread count.
pub fn run_simulation(cfg: &ScenarioConfig) -> Result<SimulationReport, Error> {
    cfg.validate()?;
    let replications = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, &replication_stream(cfg.market.seed, r)))
        .collect::<Result<Vec<_>, Error>>()?;
    let summary = Summary::from_rows(replications.iter().flatten().map(|r| &r.metrics));
    Ok(SimulationReport { replications, summary })
}
