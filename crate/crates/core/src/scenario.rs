//! Scenario configuration: the single JSON document that fully describes a run.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::auction::{AuctionRules, PricingRule};
use crate::model::{FirmId, MarketConfig, ValueDistribution};
use crate::money::Money;
use crate::secondary::SecondaryRules;
use crate::simulation::BankingPolicy;
use crate::strategy::{StrategyAssignment, StrategySpec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ScenarioError {
    pub field: String,
    pub message: String,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError { field: field.into(), message: message.into() }
}

fn one() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondarySettings {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "half")]
    pub beta: f64,
    #[serde(default)]
    pub cost_floor: bool,
}

impl Default for SecondarySettings {
    fn default() -> Self {
        SecondarySettings { enabled: false, beta: 0.5, cost_floor: false }
    }
}

impl SecondarySettings {
    pub fn rules(&self) -> Option<SecondaryRules> {
        self.enabled.then_some(SecondaryRules { beta: self.beta, cost_floor: self.cost_floor })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionSettings {
    #[serde(default)]
    pub reserve: Money,
    #[serde(default)]
    pub pricing: PricingRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

fn default_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSettings {
    fn default() -> Self {
        OutputSettings { dir: default_dir(), formats: default_formats() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub market: MarketConfig,
    #[serde(default)]
    pub strategies: StrategyAssignment,
    #[serde(default)]
    pub secondary: SecondarySettings,
    #[serde(default)]
    pub banking: BankingPolicy,
    #[serde(default)]
    pub auction: AuctionSettings,
    #[serde(default = "one")]
    pub rounds: usize,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub output: OutputSettings,
}

impl ScenarioConfig {
    pub fn new(market: MarketConfig) -> Self {
        ScenarioConfig {
            market,
            strategies: StrategyAssignment::default(),
            secondary: SecondarySettings::default(),
            banking: BankingPolicy::default(),
            auction: AuctionSettings::default(),
            rounds: 1,
            replications: 1,
            output: OutputSettings::default(),
        }
    }

    pub fn auction_rules(&self) -> AuctionRules {
        AuctionRules { k: self.market.k, reserve: self.auction.reserve, pricing: self.auction.pricing }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.market.validate().map_err(|e| invalid("market", e.to_string()))?;
        if self.rounds < 1 {
            return Err(invalid("rounds", "rounds must be ≥ 1"));
        }
        if self.replications < 1 {
            return Err(invalid("replications", "replications must be ≥ 1"));
        }
        if self.auction.reserve.is_negative() {
            return Err(invalid("auction.reserve", "reserve must be non-negative"));
        }
        if self.secondary.enabled {
            SecondaryRules { beta: self.secondary.beta, cost_floor: self.secondary.cost_floor }
                .validate()
                .map_err(|e| invalid("secondary.beta", e.to_string()))?;
        }
        let speculator = self.market.speculator_id();
        for (firm, spec) in &self.strategies.per_firm {
            if firm.0 == 0 || firm.0 as usize > self.market.n {
                return Err(invalid(
                    format!("strategies.{firm}"),
                    format!("no firm {firm} among 1..={}", self.market.n),
                ));
            }
            self.check_spec(&format!("strategies.{firm}"), *firm, spec, Some(*firm) == speculator)?;
        }
        // the default applies to every unlisted polluter
        if self.market.firm_ids().any(|f| Some(f) != speculator && !self.strategies.per_firm.contains_key(&f)) {
            self.check_spec("strategies.default", FirmId(0), &self.strategies.default, false)?;
        }
        Ok(())
    }

    fn check_spec(
        &self,
        field: &str,
        firm: FirmId,
        spec: &StrategySpec,
        is_speculator: bool,
    ) -> Result<(), ScenarioError> {
        match spec {
            StrategySpec::SpeculatorGrid(grid) => {
                if !is_speculator {
                    return Err(invalid(field, "speculator_grid is only valid for the speculator"));
                }
                if grid.bid_grid.is_empty() {
                    return Err(invalid(field, "bid_grid must not be empty"));
                }
                if grid.bid_grid.iter().any(|b| b.is_negative()) {
                    return Err(invalid(field, "bid_grid entries must be non-negative"));
                }
                if grid.mc_samples == 0 {
                    return Err(invalid(field, "mc_samples must be ≥ 1"));
                }
                if grid.units_demanded == 0 || grid.units_demanded > self.market.k {
                    return Err(invalid(field, format!("units_demanded must lie in 1..={}", self.market.k)));
                }
            }
            StrategySpec::Shaded { factors, .. } => {
                if factors.iter().any(|f| !(0.0..=1.0).contains(f)) {
                    return Err(invalid(field, "shading factors must lie in [0, 1]"));
                }
                let units = self.units_of(firm);
                if let Some(u) = units.filter(|u| *u != factors.len()) {
                    return Err(invalid(field, format!("{} factors for {u} units", factors.len())));
                }
            }
            StrategySpec::SecondaryAware { base, extra_shade } => {
                if !(0.0..=1.0).contains(extra_shade) {
                    return Err(invalid(field, "extra_shade must lie in [0, 1]"));
                }
                self.check_spec(&format!("{field}.base"), firm, base, false)?;
            }
            StrategySpec::FixedBids { bids } => {
                crate::model::BidSchedule::new(firm, bids.clone())
                    .validate(self.market.k)
                    .map_err(|e| invalid(field, e.to_string()))?;
            }
            StrategySpec::Truthful => {}
        }
        Ok(())
    }

    // Demand length of a polluter, when it is known before sampling.
    fn units_of(&self, firm: FirmId) -> Option<usize> {
        match &self.market.distribution {
            ValueDistribution::Fixed { profiles } => {
                if firm.0 == 0 {
                    let lens: Vec<usize> = profiles.iter().map(Vec::len).collect();
                    lens.windows(2).all(|w| w[0] == w[1]).then(|| lens.first().copied()).flatten()
                } else {
                    profiles.get(firm.0 as usize - 1).map(Vec::len)
                }
            }
            _ => Some(self.market.units_per_firm()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Beta,
    ExtraShade,
    SpeculatorBid,
    K,
    BankingCap,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::ExtraShade => "extra_shade",
            SweepParam::SpeculatorBid => "speculator_bid",
            SweepParam::K => "k",
            SweepParam::BankingCap => "banking_cap",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "beta" => Ok(SweepParam::Beta),
            "extra_shade" => Ok(SweepParam::ExtraShade),
            "speculator_bid" => Ok(SweepParam::SpeculatorBid),
            "k" => Ok(SweepParam::K),
            "banking_cap" => Ok(SweepParam::BankingCap),
            _ => Err(invalid(
                "param",
                format!("unknown sweep parameter `{s}` (expected beta, extra_shade, speculator_bid, k, banking_cap)"),
            )),
        }
    }
}

fn as_count(param: SweepParam, value: &str) -> Result<usize, ScenarioError> {
    value.trim().parse::<usize>().map_err(|_| invalid(param.name(), format!("`{value}` is not a non-negative integer")))
}

fn as_fraction(param: SweepParam, value: &str) -> Result<f64, ScenarioError> {
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| invalid(param.name(), format!("`{value}` is not a number")))
}

fn with_extra_shade(spec: &StrategySpec, shade: f64) -> StrategySpec {
    match spec {
        StrategySpec::SpeculatorGrid(_) => spec.clone(),
        StrategySpec::SecondaryAware { base, .. } => {
            StrategySpec::SecondaryAware { base: base.clone(), extra_shade: shade }
        }
        other => StrategySpec::SecondaryAware { base: Box::new(other.clone()), extra_shade: shade },
    }
}

/// Returns a copy of `base` with one parameter overridden. The result is
/// validated.
pub fn apply_sweep(base: &ScenarioConfig, param: SweepParam, value: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = base.clone();
    match param {
        SweepParam::Beta => cfg.secondary.beta = as_fraction(param, value)?,
        SweepParam::ExtraShade => {
            let shade = as_fraction(param, value)?;
            let speculator = cfg.market.speculator_id();
            cfg.strategies.default = with_extra_shade(&cfg.strategies.default, shade);
            for (firm, spec) in cfg.strategies.per_firm.iter_mut() {
                if Some(*firm) != speculator {
                    *spec = with_extra_shade(spec, shade);
                }
            }
        }
        SweepParam::SpeculatorBid => {
            let bid: Money = value
                .trim()
                .parse()
                .map_err(|e: crate::money::ParseMoneyError| invalid(param.name(), e.to_string()))?;
            let firm = cfg.market.speculator_id().ok_or_else(|| invalid(param.name(), "scenario has no speculator"))?;
            cfg.strategies.per_firm.insert(firm, StrategySpec::FixedBids { bids: vec![bid] });
        }
        SweepParam::K => cfg.market.k = as_count(param, value)?,
        SweepParam::BankingCap => {
            cfg.banking.cap_per_firm = as_count(param, value)?;
            cfg.banking.enabled = true;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
