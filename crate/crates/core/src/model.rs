//! Market participants, their private values, and value sampling.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::money::Money;
use crate::rng::SeedStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FirmId(pub u32);

impl fmt::Display for FirmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirmKind {
    Polluter,
    /// Zero use value; profits only through resale.
    Speculator,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("firm {firm}: marginal values increase at unit {index}")]
    NonMonotoneValues { firm: FirmId, index: usize },
    #[error("firm {firm}: negative value at unit {index}")]
    NegativeValue { firm: FirmId, index: usize },
    #[error("firm {firm}: {len} units exceeds the {k} permits on offer")]
    TooManyUnits { firm: FirmId, len: usize, k: usize },
    #[error("firm {firm}: value profile is empty")]
    EmptyProfile { firm: FirmId },
    #[error("firm {firm}: speculator profile must be all zeros")]
    SpeculatorWithValue { firm: FirmId },
    #[error("firm {firm}: bids increase at unit {index}")]
    NonMonotoneBids { firm: FirmId, index: usize },
    #[error("firm {firm}: negative bid at unit {index}")]
    NegativeBid { firm: FirmId, index: usize },
    #[error("market needs at least 2 firms, got {0}")]
    TooFewFirms(usize),
    #[error("permit count k must be at least 1")]
    NoPermits,
    #[error("units_per_firm must lie in 1..={k}, got {got}")]
    BadUnitsPerFirm { got: usize, k: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// A firm's marginal value for each successive unit (non-increasing).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValuationProfile {
    pub firm_id: FirmId,
    pub kind: FirmKind,
    pub values: Vec<Money>,
}

impl ValuationProfile {
    pub fn polluter(firm_id: FirmId, values: Vec<Money>) -> Self {
        ValuationProfile { firm_id, kind: FirmKind::Polluter, values }
    }

    pub fn speculator(firm_id: FirmId, units: usize) -> Self {
        ValuationProfile { firm_id, kind: FirmKind::Speculator, values: vec![Money::ZERO; units] }
    }

    pub fn units(&self) -> usize {
        self.values.len()
    }

    pub fn is_speculator(&self) -> bool {
        self.kind == FirmKind::Speculator
    }

    /// Sum of the first `units` marginal values.
    pub fn value_of(&self, units: usize) -> Money {
        self.values.iter().take(units).sum()
    }
}

pub fn validate_profile(profile: ValuationProfile, k: usize) -> Result<ValuationProfile, ModelError> {
    let firm = profile.firm_id;
    if profile.values.is_empty() {
        return Err(ModelError::EmptyProfile { firm });
    }
    if profile.values.len() > k {
        return Err(ModelError::TooManyUnits { firm, len: profile.values.len(), k });
    }
    if let Some(index) = profile.values.iter().position(|v| v.is_negative()) {
        return Err(ModelError::NegativeValue { firm, index });
    }
    if let Some(index) = first_increase(&profile.values) {
        return Err(ModelError::NonMonotoneValues { firm, index });
    }
    if profile.is_speculator() && profile.values.iter().any(|v| *v != Money::ZERO) {
        return Err(ModelError::SpeculatorWithValue { firm });
    }
    Ok(profile)
}

fn first_increase(xs: &[Money]) -> Option<usize> {
    xs.windows(2).position(|w| w[1] > w[0]).map(|i| i + 1)
}

/// A submitted demand schedule: one bid per unit, non-increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidSchedule {
    pub firm_id: FirmId,
    pub bids: Vec<Money>,
}

impl BidSchedule {
    pub fn new(firm_id: FirmId, bids: Vec<Money>) -> Self {
        BidSchedule { firm_id, bids }
    }

    pub fn empty(firm_id: FirmId) -> Self {
        BidSchedule { firm_id, bids: Vec::new() }
    }

    pub fn validate(&self, k: usize) -> Result<(), ModelError> {
        let firm = self.firm_id;
        if self.bids.len() > k {
            return Err(ModelError::TooManyUnits { firm, len: self.bids.len(), k });
        }
        if let Some(index) = self.bids.iter().position(|b| b.is_negative()) {
            return Err(ModelError::NegativeBid { firm, index });
        }
        if let Some(index) = first_increase(&self.bids) {
            return Err(ModelError::NonMonotoneBids { firm, index });
        }
        Ok(())
    }

    /// Elementwise `self <= other`; a missing entry counts as a zero bid.
    pub fn weakly_below(&self, other: &BidSchedule) -> bool {
        let len = self.bids.len().max(other.bids.len());
        (0..len).all(|u| {
            let a = self.bids.get(u).copied().unwrap_or(Money::ZERO);
            let b = other.bids.get(u).copied().unwrap_or(Money::ZERO);
            a <= b
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePoint {
    pub value: Money,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ValueDistribution {
    Uniform {
        lo: Money,
        hi: Money,
    },
    Discrete {
        support: Vec<DiscretePoint>,
    },
    /// Fixed polluter value vectors, assigned to firms 1, 2, ... in order.
    Fixed {
        profiles: Vec<Vec<Money>>,
    },
}

impl ValueDistribution {
    fn validate(&self, polluters: usize, k: usize) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidDistribution(msg));
        match self {
            ValueDistribution::Uniform { lo, hi } => {
                if lo.is_negative() {
                    return bad(format!("uniform lower bound {lo} is negative"));
                }
                if lo > hi {
                    return bad(format!("uniform bounds reversed: {lo} > {hi}"));
                }
            }
            ValueDistribution::Discrete { support } => {
                if support.is_empty() {
                    return bad("discrete support is empty".into());
                }
                if let Some(p) = support.iter().find(|p| p.value.is_negative()) {
                    return bad(format!("discrete support value {} is negative", p.value));
                }
                if support.iter().any(|p| !(0.0..=1.0).contains(&p.probability)) {
                    return bad("discrete probabilities must lie in [0, 1]".into());
                }
                let total: f64 = support.iter().map(|p| p.probability).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("discrete probabilities sum to {total}, expected 1"));
                }
            }
            ValueDistribution::Fixed { profiles } => {
                if profiles.len() != polluters {
                    return bad(format!(
                        "fixed distribution lists {} profiles for {polluters} polluters",
                        profiles.len()
                    ));
                }
                for (i, values) in profiles.iter().enumerate() {
                    let firm = FirmId(i as u32 + 1);
                    validate_profile(ValuationProfile::polluter(firm, values.clone()), k)?;
                }
            }
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Money {
        match self {
            ValueDistribution::Uniform { lo, hi } => Money::from_nanos(rng.gen_range(lo.nanos()..=hi.nanos())),
            ValueDistribution::Discrete { support } => {
                let u: f64 = rng.gen();
                let mut cumulative = 0.0;
                for point in support {
                    cumulative += point.probability;
                    if u < cumulative {
                        return point.value;
                    }
                }
                support.last().map(|p| p.value).unwrap_or_default()
            }
            ValueDistribution::Fixed { .. } => unreachable!("fixed profiles are not drawn"),
        }
    }
}

/// How a sampled firm's per-unit values relate to each other.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandShape {
    /// Independent draw per unit, sorted descending.
    #[default]
    Declining,
    /// One draw shared by every unit.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    /// Total firms, including the speculator when present.
    pub n: usize,
    pub k: usize,
    pub distribution: ValueDistribution,
    #[serde(default)]
    pub speculator_present: bool,
    #[serde(default)]
    pub seed: u64,
    /// Units demanded per sampled firm; defaults to `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units_per_firm: Option<usize>,
    #[serde(default)]
    pub demand_shape: DemandShape,
}

impl MarketConfig {
    pub fn polluter_count(&self) -> usize {
        self.n - usize::from(self.speculator_present)
    }

    /// The speculator always takes the last id, `n`.
    pub fn speculator_id(&self) -> Option<FirmId> {
        self.speculator_present.then_some(FirmId(self.n as u32))
    }

    pub fn firm_ids(&self) -> impl Iterator<Item = FirmId> {
        (1..=self.n as u32).map(FirmId)
    }

    pub fn units_per_firm(&self) -> usize {
        match &self.distribution {
            ValueDistribution::Fixed { profiles } => profiles.iter().map(Vec::len).max().unwrap_or(1),
            _ => self.units_per_firm.unwrap_or(self.k),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n < 2 {
            return Err(ModelError::TooFewFirms(self.n));
        }
        if self.k == 0 {
            return Err(ModelError::NoPermits);
        }
        if let Some(m) = self.units_per_firm {
            if m == 0 || m > self.k {
                return Err(ModelError::BadUnitsPerFirm { got: m, k: self.k });
            }
        }
        self.distribution.validate(self.polluter_count(), self.k)
    }
}

/// Draws one profile per firm. Each polluter reads its own `values/<id>`
/// stream, so a firm's draws do not depend on how many other firms exist.
pub fn sample_profiles(config: &MarketConfig, stream: &SeedStream) -> Vec<ValuationProfile> {
    let units = config.units_per_firm();
    let mut profiles: Vec<ValuationProfile> = match &config.distribution {
        ValueDistribution::Fixed { profiles } => profiles
            .iter()
            .enumerate()
            .map(|(i, v)| ValuationProfile::polluter(FirmId(i as u32 + 1), v.clone()))
            .collect(),
        dist => (1..=config.polluter_count() as u32)
            .map(|id| {
                let mut rng = stream.derive("values", u64::from(id)).rng();
                let values = match config.demand_shape {
                    DemandShape::Constant => vec![dist.draw(&mut rng); units],
                    DemandShape::Declining => {
                        let mut v: Vec<Money> = (0..units).map(|_| dist.draw(&mut rng)).collect();
                        v.sort_unstable_by(|a, b| b.cmp(a));
                        v
                    }
                };
                ValuationProfile::polluter(FirmId(id), values)
            })
            .collect(),
    };
    if let Some(id) = config.speculator_id() {
        profiles.push(ValuationProfile::speculator(id, units));
    }
    profiles
}

pub fn find_profile(profiles: &[ValuationProfile], firm: FirmId) -> Option<&ValuationProfile> {
    profiles.iter().find(|p| p.firm_id == firm)
}
