//! `verify`: runs oracle checks over instance families and collects
//! witnesses.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ets_core::auction::AuctionRules;
use ets_core::model::{sample_profiles, BidSchedule, DemandShape, MarketConfig, ValuationProfile, ValueDistribution};
use ets_core::oracle::{
    check_efficiency_equivalence, check_remark_zero_profit, check_resale_restores_efficiency, check_secondary_shading,
    check_speculator_price_monotonicity, BidGrid, DEFAULT_ENUMERATION_CAP,
};
use ets_core::secondary::SecondaryRules;
use ets_core::strategy::shaded_schedule;
use ets_core::worked_example as ex;
use ets_core::{Money, SeedStream};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::run::{ensure_dir, write_json};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Resale makes firms bid weakly lower.
    Prop1,
    /// Surplus maximization is equivalent to efficiency.
    Prop2,
    /// Resale restores an efficient allocation and generates rent.
    Prop3,
    /// A speculator never lowers the clearing price.
    Prop4,
    /// A speculator cannot profit against truthful bidders.
    Remark,
}

impl Check {
    pub const ALL: [Check; 5] = [Check::Prop1, Check::Prop2, Check::Prop3, Check::Prop4, Check::Remark];

    pub fn name(self) -> &'static str {
        match self {
            Check::Prop1 => "prop1",
            Check::Prop2 => "prop2",
            Check::Prop3 => "prop3",
            Check::Prop4 => "prop4",
            Check::Remark => "remark",
        }
    }

    /// Shading is reported with its pass rate but does not fail the run:
    /// best responses on a coarse grid need not be monotone.
    pub fn gating(self) -> bool {
        self != Check::Prop1
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| format!("unknown check `{s}` (expected prop1, prop2, prop3, prop4, remark)"))
    }
}

fn half() -> f64 {
    0.5
}
fn default_cap() -> u64 {
    DEFAULT_ENUMERATION_CAP
}
fn five() -> usize {
    5
}
fn four() -> usize {
    4
}
fn two() -> usize {
    2
}
fn ten() -> Money {
    Money::from_int(10)
}
fn half_money() -> Money {
    Money::from_f64(0.5)
}
fn default_shade() -> f64 {
    0.4
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomFamily {
    pub instances: usize,
    /// Upper bound on firms per instance, speculator included.
    #[serde(default = "five")]
    pub n_max: usize,
    #[serde(default = "four")]
    pub k_max: usize,
    #[serde(default = "two")]
    pub max_units: usize,
    #[serde(default)]
    pub lo: Money,
    #[serde(default = "ten")]
    pub hi: Money,
    #[serde(default = "half_money")]
    pub grid_step: Money,
    /// Polluter bid on unit j is value * (1 - shade * j).
    #[serde(default = "default_shade")]
    pub shade: f64,
    #[serde(default = "yes")]
    pub speculator: bool,
    /// Restricts the family to these checks.
    #[serde(default)]
    pub checks: Option<Vec<Check>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    WorkedExample,
    Random(RandomFamily),
}

impl Family {
    fn label(&self, index: usize) -> String {
        match self {
            Family::WorkedExample => format!("{index}:worked_example"),
            Family::Random(_) => format!("{index}:random"),
        }
    }

    fn runs(&self, check: Check) -> bool {
        match self {
            Family::WorkedExample => true,
            Family::Random(r) => r.checks.as_ref().is_none_or(|c| c.contains(&check)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "half")]
    pub beta: f64,
    #[serde(default)]
    pub cost_floor: bool,
    #[serde(default = "default_cap")]
    pub enumeration_cap: u64,
    pub families: Vec<Family>,
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<(), String> {
        SecondaryRules { beta: self.beta, cost_floor: self.cost_floor }.validate().map_err(|e| e.to_string())?;
        if self.families.is_empty() {
            return Err("families: at least one instance family is required".into());
        }
        for (i, f) in self.families.iter().enumerate() {
            if let Family::Random(r) = f {
                let min_n = if r.speculator { 2 } else { 1 };
                if r.n_max < min_n || r.k_max == 0 || r.max_units == 0 {
                    return Err(format!("families[{i}]: n_max, k_max and max_units must be positive"));
                }
                if r.lo.is_negative() || r.hi < r.lo || !r.grid_step.is_positive() {
                    return Err(format!("families[{i}]: need 0 <= lo <= hi and grid_step > 0"));
                }
                if !(0.0..=1.0).contains(&r.shade) {
                    return Err(format!("families[{i}]: shade must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// One oracle input: values, the polluters' fixed schedules and an
/// optional speculator schedule.
#[derive(Debug, Clone, Serialize)]
pub struct Instance {
    pub family: String,
    pub index: usize,
    pub k: usize,
    pub profiles: Vec<ValuationProfile>,
    pub polluter_schedules: Vec<BidSchedule>,
    pub speculator_schedule: Option<BidSchedule>,
    #[serde(skip)]
    pub grid: Option<BidGrid>,
}

impl Instance {
    pub fn schedules(&self) -> Vec<BidSchedule> {
        let mut s = self.polluter_schedules.clone();
        s.extend(self.speculator_schedule.clone());
        s
    }

    fn rules(&self) -> AuctionRules {
        AuctionRules::new(self.k)
    }
}

fn shade_factors(units: usize, shade: f64) -> Vec<f64> {
    (0..units).map(|j| (1.0 - shade * j as f64).max(0.0)).collect()
}

fn random_instances(label: &str, fam: &RandomFamily, stream: &SeedStream) -> Result<Vec<Instance>, CliError> {
    let grid =
        BidGrid::uniform(fam.lo, fam.hi, fam.grid_step, fam.max_units).map_err(|e| CliError::Config(e.to_string()))?;
    (0..fam.instances)
        .map(|i| {
            let s = stream.derive("instance", i as u64);
            let mut rng = s.derive("shape", 0).rng();
            let k = rng.gen_range(1..=fam.k_max);
            let min_n = if fam.speculator { 2 } else { 1 };
            let n = rng.gen_range(min_n..=fam.n_max.max(min_n));
            let units = rng.gen_range(1..=fam.max_units.min(k));
            let market = MarketConfig {
                n,
                k,
                distribution: ValueDistribution::Uniform { lo: fam.lo, hi: fam.hi },
                speculator_present: fam.speculator,
                seed: 0,
                units_per_firm: Some(units),
                demand_shape: DemandShape::Declining,
            };
            let profiles = sample_profiles(&market, &s);
            let polluter_schedules = profiles
                .iter()
                .filter(|p| !p.is_speculator())
                .map(|p| shaded_schedule(p, &shade_factors(units, fam.shade), true))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let speculator_schedule = market.speculator_id().map(|id| {
                let bid = Money::from_nanos(rng.gen_range(fam.lo.nanos()..=fam.hi.nanos()));
                BidSchedule::new(id, vec![bid])
            });
            Ok(Instance {
                family: label.to_string(),
                index: i,
                k,
                profiles,
                polluter_schedules,
                speculator_schedule,
                grid: Some(grid.clone()),
            })
        })
        .collect()
}

fn example_instance(label: &str, index: usize, polluters: Vec<BidSchedule>, spec_bid: Option<f64>) -> Instance {
    let profiles = if spec_bid.is_some() { ex::all_profiles() } else { ex::polluter_profiles() };
    Instance {
        family: label.to_string(),
        index,
        k: ex::K,
        profiles,
        polluter_schedules: polluters,
        speculator_schedule: spec_bid.map(|b| BidSchedule::new(ex::SPECULATOR, vec![Money::from_f64(b)])),
        grid: Some(BidGrid::uniform(Money::ZERO, Money::from_int(10), Money::from_f64(0.5), 2).expect("valid grid")),
    }
}

/// Worked-example instances relevant to `check`.
fn example_instances(label: &str, check: Check) -> Vec<Instance> {
    let e = |i, p, s| example_instance(label, i, p, s);
    match check {
        Check::Prop2 => vec![e(0, ex::truthful_bids(), None)],
        Check::Prop3 => vec![
            e(0, ex::moderate_reduction_bids(), None),
            e(1, ex::moderate_reduction_bids(), Some(6.5)),
            e(2, ex::deep_reduction_bids(), None),
            e(3, ex::deep_reduction_bids(), Some(6.0)),
        ],
        Check::Prop4 => {
            vec![e(0, ex::moderate_reduction_bids(), Some(6.5)), e(1, ex::deep_reduction_bids(), Some(6.0))]
        }
        Check::Prop1 => vec![e(0, ex::moderate_reduction_bids(), None)],
        Check::Remark => vec![e(0, ex::truthful_bids(), Some(0.0))],
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub family: String,
    pub instance: usize,
    pub input: Value,
    pub report: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub check: Check,
    pub gating: bool,
    pub instances: usize,
    pub passed: usize,
    pub failed: usize,
    pub pass_rate: f64,
    /// Check-specific tallies, e.g. how many instances were non-trivial.
    pub tallies: BTreeMap<String, usize>,
    pub witnesses: Vec<Witness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub config: VerifyConfig,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn outcome(&self, check: Check) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.check == check)
    }

    pub fn failed_gating(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| c.gating && c.failed > 0)
            .map(|c| format!("{} ({} of {} instances)", c.check, c.failed, c.instances))
            .collect()
    }
}

struct InstanceResult {
    passed: bool,
    tallies: Vec<&'static str>,
    report: Value,
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn run_one(check: Check, inst: &Instance, cfg: &VerifyConfig) -> Result<Option<InstanceResult>, ets_core::Error> {
    let secondary = SecondaryRules { beta: cfg.beta, cost_floor: cfg.cost_floor };
    let cap = cfg.enumeration_cap;
    let rules = inst.rules();
    let grid = inst.grid.as_ref();
    Ok(Some(match check {
        Check::Prop2 => {
            let r = check_efficiency_equivalence(&inst.profiles, inst.k, cap)?;
            let mut t = vec![];
            if r.maximizers > 1 {
                t.push("multiple_maximizers");
            }
            InstanceResult { passed: r.passed, tallies: t, report: to_value(&r) }
        }
        Check::Prop3 => {
            let r = check_resale_restores_efficiency(&inst.profiles, &inst.schedules(), &rules, &secondary, cap)?;
            let t = if r.initially_efficient { vec![] } else { vec!["initially_inefficient"] };
            InstanceResult { passed: r.passed, tallies: t, report: to_value(&r) }
        }
        Check::Prop4 => {
            let Some(spec) = &inst.speculator_schedule else { return Ok(None) };
            let r = check_speculator_price_monotonicity(&inst.profiles, &inst.polluter_schedules, spec, &rules)?;
            let mut t = vec![];
            if r.speculator_units > 0 {
                t.push("speculator_won");
                if r.strict {
                    t.push("speculator_won_strict");
                }
            }
            if r.strict {
                t.push("strict");
            }
            InstanceResult { passed: r.passed, tallies: t, report: to_value(&r) }
        }
        Check::Prop1 => {
            let Some(grid) = grid else { return Ok(None) };
            let r = check_secondary_shading(&inst.profiles, &inst.schedules(), grid, &rules, &secondary, cap)?;
            let t = if r.price_with < r.price_without { vec!["price_strictly_lower"] } else { vec![] };
            InstanceResult { passed: r.passed, tallies: t, report: to_value(&r) }
        }
        Check::Remark => {
            let (Some(grid), true) = (grid, inst.speculator_schedule.is_some()) else { return Ok(None) };
            let r = check_remark_zero_profit(&inst.profiles, grid, &rules, &secondary, cap)?;
            let t = if r.max_profit == Money::ZERO { vec!["max_profit_zero"] } else { vec![] };
            InstanceResult { passed: r.passed, tallies: t, report: to_value(&r) }
        }
    }))
}

/// Every instance the configured families produce for `check`.
pub fn instances_for(cfg: &VerifyConfig, check: Check) -> Result<Vec<Instance>, CliError> {
    let root = SeedStream::root(cfg.seed);
    let mut out = Vec::new();
    for (i, fam) in cfg.families.iter().enumerate() {
        if !fam.runs(check) {
            continue;
        }
        let label = fam.label(i);
        match fam {
            Family::WorkedExample => out.extend(example_instances(&label, check)),
            Family::Random(r) => out.extend(random_instances(&label, r, &root.derive("family", i as u64))?),
        }
    }
    Ok(out)
}

pub fn run_check(cfg: &VerifyConfig, check: Check) -> Result<CheckOutcome, CliError> {
    let instances = instances_for(cfg, check)?;
    let results = instances
        .par_iter()
        .map(|inst| run_one(check, inst, cfg).map(|r| r.map(|r| (inst, r))))
        .collect::<Result<Vec<_>, _>>()?;

    let mut outcome = CheckOutcome {
        check,
        gating: check.gating(),
        instances: 0,
        passed: 0,
        failed: 0,
        pass_rate: 1.0,
        tallies: BTreeMap::new(),
        witnesses: Vec::new(),
    };
    for (inst, r) in results.into_iter().flatten() {
        outcome.instances += 1;
        for t in r.tallies {
            *outcome.tallies.entry(t.to_string()).or_default() += 1;
        }
        if r.passed {
            outcome.passed += 1;
        } else {
            outcome.failed += 1;
            outcome.witnesses.push(Witness {
                family: inst.family.clone(),
                instance: inst.index,
                input: to_value(inst),
                report: r.report,
            });
        }
    }
    if outcome.instances > 0 {
        outcome.pass_rate = outcome.passed as f64 / outcome.instances as f64;
    }
    Ok(outcome)
}

pub fn verify(cfg: &VerifyConfig, checks: &[Check]) -> Result<VerifyReport, CliError> {
    cfg.validate().map_err(CliError::Config)?;
    let checks = checks.iter().map(|c| run_check(cfg, *c)).collect::<Result<Vec<_>, _>>()?;
    Ok(VerifyReport { seed: cfg.seed, config: cfg.clone(), checks })
}

pub fn write_witnesses(dir: &Path, report: &VerifyReport) -> Result<(), CliError> {
    ensure_dir(dir)?;
    write_json(&dir.join("witnesses.json"), &json!(report))
}

pub fn render(report: &VerifyReport) -> String {
    let mut s = String::new();
    for c in &report.checks {
        let status = match (c.failed, c.gating) {
            (0, _) => "PASS",
            (_, true) => "FAIL",
            (_, false) => "REPORT",
        };
        let tallies: Vec<String> = c.tallies.iter().map(|(k, v)| format!("{k}={v}")).collect();
        s.push_str(&format!(
            "{status:<6} {:<7} {}/{} passed ({:.1}%){}{}\n",
            c.check.name(),
            c.passed,
            c.instances,
            100.0 * c.pass_rate,
            if tallies.is_empty() { String::new() } else { format!("  [{}]", tallies.join(", ")) },
            if c.witnesses.is_empty() { String::new() } else { format!("  {} witness(es)", c.witnesses.len()) },
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_cfg() -> VerifyConfig {
        VerifyConfig {
            seed: 1,
            beta: 0.5,
            cost_floor: false,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            families: vec![Family::WorkedExample],
        }
    }

    #[test]
    fn worked_example_checks_pass() {
        let r = verify(&example_cfg(), &[Check::Prop2, Check::Prop3, Check::Prop4, Check::Remark]).unwrap();
        assert!(r.failed_gating().is_empty(), "{}", render(&r));
        let p4 = r.outcome(Check::Prop4).unwrap();
        assert_eq!(p4.tallies.get("strict"), Some(&2));
    }

    #[test]
    fn check_names_round_trip() {
        for c in Check::ALL {
            assert_eq!(c.name().parse::<Check>().unwrap(), c);
        }
        assert!("prop9".parse::<Check>().is_err());
    }

    #[test]
    fn random_families_are_reproducible() {
        let fam = RandomFamily {
            instances: 5,
            n_max: 4,
            k_max: 3,
            max_units: 2,
            lo: Money::ZERO,
            hi: Money::from_int(10),
            grid_step: Money::from_int(1),
            shade: 0.4,
            speculator: true,
            checks: None,
        };
        let s = SeedStream::root(4);
        let a = random_instances("x", &fam, &s).unwrap();
        let b = random_instances("x", &fam, &s).unwrap();
        assert_eq!(to_value(&a), to_value(&b));
        assert!(a.iter().all(|i| i.speculator_schedule.is_some()));
    }

    #[test]
    fn config_parses_with_defaults() {
        let cfg: VerifyConfig =
            serde_json::from_str(r#"{"families":[{"kind":"worked_example"},{"kind":"random","instances":3}]}"#)
                .unwrap();
        assert_eq!(cfg.beta, 0.5);
        assert!(cfg.validate().is_ok());
    }
}
