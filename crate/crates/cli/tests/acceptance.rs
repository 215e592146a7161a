//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Tolerances: every money comparison is exact (fixed-point nano units, so
//! the tolerance is zero at one-decimal granularity); runtime bounds are
//! wall-clock on the test profile.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ets_core::auction::clear_auction;
use ets_core::model::{FirmId, ValuationProfile};
use ets_core::strategy::{secondary_aware_schedule, static_schedule, StrategySpec};
use ets_core::{Money, SeedStream};
use ets_sim::replay::{self, EXPECTED};
use ets_sim::verify::{self, Check, Family, RandomFamily, VerifyConfig};
use rand::Rng;

const SEED: u64 = 20_240_601;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ets-sim")
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn family(instances: usize, n_max: usize, k_max: usize, grid_step: f64, speculator: bool, checks: &[Check]) -> Family {
    Family::Random(RandomFamily {
        instances,
        n_max,
        k_max,
        max_units: 2,
        lo: Money::ZERO,
        hi: Money::from_int(10),
        grid_step: Money::from_f64(grid_step),
        shade: 0.4,
        speculator,
        checks: Some(checks.to_vec()),
    })
}

fn config(families: Vec<Family>) -> VerifyConfig {
    VerifyConfig { seed: SEED, beta: 0.5, cost_floor: false, enumeration_cap: 10_000_000, families }
}

/// Criterion 1: The worked example replays exactly, in under a second.
fn golden_replay() -> Outcome {
    let start = Instant::now();
    let out = Command::new(bin()).arg("replay-example").output().unwrap();
    let elapsed = start.elapsed();
    let report = replay::replay().unwrap();
    let mut errors = report.mismatches.clone();
    for (row, want) in report.rows.iter().zip(EXPECTED.iter()) {
        let payoffs: Vec<Money> = want.payoffs.iter().map(|p| Money::from_f64(*p)).collect();
        if row.clearing_price != Money::from_f64(want.price)
            || row.bidder_surplus != Money::from_f64(want.surplus)
            || row.revenue != Money::from_f64(want.revenue)
            || row.payoffs != payoffs
        {
            errors.push(row.label.clone());
        }
    }
    let prices: Vec<String> = report.rows.iter().map(|r| r.clearing_price.to_string()).collect();
    let surpluses: Vec<String> = report.rows.iter().map(|r| r.bidder_surplus.to_string()).collect();
    let revenues: Vec<String> = report.rows.iter().map(|r| r.revenue.to_string()).collect();
    outcome(
        out.status.code() == Some(0) && errors.is_empty() && elapsed < Duration::from_secs(1),
        format!(
            "prices ({}), surpluses ({}), revenues ({}); exit {:?}; {:.0?}{}",
            prices.join(","),
            surpluses.join(","),
            revenues.join(","),
            out.status.code(),
            elapsed,
            if errors.is_empty() { String::new() } else { format!("; mismatches {errors:?}") }
        ),
    )
}

/// Criterion 2: Resale of the speculator's unit after each reduced-bid row.
fn resale_epilogues() -> Outcome {
    let report = replay::replay().unwrap();
    let moderate = &report.epilogues[0];
    let deep = &report.epilogues[1];
    outcome(
        moderate.netted_gain == Money::from_int(1)
            && deep.netted_gain == Money::from_int(4)
            && deep.holder_value_gain == Money::from_int(9),
        format!(
            "moderate netted gain {}; deep netted gain {}, holder-value gain {}",
            moderate.netted_gain, deep.netted_gain, deep.holder_value_gain
        ),
    )
}

/// Criteria 3 and 4 share one random family.
fn efficiency_and_resale() -> (Outcome, Outcome) {
    let cfg = config(vec![family(1000, 5, 4, 0.5, true, &[Check::Prop2, Check::Prop3])]);
    let start = Instant::now();
    let r = verify::verify(&cfg, &[Check::Prop2]).unwrap();
    let elapsed = start.elapsed();
    let p2 = r.outcome(Check::Prop2).unwrap();
    let c3 = outcome(
        p2.instances >= 1000 && p2.failed == 0 && elapsed < Duration::from_secs(60),
        format!("{}/{} instances agree with the enumerator; {:.1?}", p2.passed, p2.instances, elapsed),
    );

    let r = verify::verify(&cfg, &[Check::Prop3]).unwrap();
    let p3 = r.outcome(Check::Prop3).unwrap();
    let inefficient = p3.tallies.get("initially_inefficient").copied().unwrap_or(0);
    let c4 = outcome(
        p3.failed == 0 && inefficient > 0,
        format!(
            "{}/{} pass; {} started inefficient and were restored with positive rent",
            p3.passed, p3.instances, inefficient
        ),
    );
    (c3, c4)
}

/// Criterion 5: injecting a speculator never lowers the price, and raises
/// it whenever the speculator wins a unit that polluters were competing for.
fn price_monotonicity() -> Outcome {
    let cfg = config(vec![family(1000, 5, 4, 0.5, true, &[Check::Prop4])]);
    let r = verify::verify(&cfg, &[Check::Prop4]).unwrap();
    let p4 = r.outcome(Check::Prop4).unwrap();

    // Independent recount of the strict cases straight from the auction.
    let mut won = 0;
    let mut won_strict = 0;
    let mut won_slack = 0;
    let mut violations = Vec::new();
    for inst in verify::instances_for(&cfg, Check::Prop4).unwrap() {
        let rules = ets_core::AuctionRules::new(inst.k);
        let spec = inst.speculator_schedule.clone().unwrap();
        let without = clear_auction(&inst.polluter_schedules, &inst.profiles, &rules).unwrap();
        let with = clear_auction(&inst.schedules(), &inst.profiles, &rules).unwrap();
        if with.clearing_price < without.clearing_price {
            violations.push(inst.index);
        }
        if with.allocation.units(spec.firm_id) == 0 {
            continue;
        }
        won += 1;
        let competing = inst.polluter_schedules.iter().flat_map(|s| &s.bids).filter(|b| **b > rules.reserve).count();
        if with.clearing_price > without.clearing_price {
            won_strict += 1;
        } else if competing < inst.k {
            // Supply exceeds polluter demand: the price stays at the reserve.
            won_slack += 1;
        } else {
            violations.push(inst.index);
        }
    }
    outcome(
        p4.instances >= 1000 && p4.failed == 0 && violations.is_empty(),
        format!(
            "{}/{} weakly higher; speculator won {won}: {won_strict} strict, {won_slack} with slack supply \
             (price stays at reserve); violations {violations:?}",
            p4.passed, p4.instances
        ),
    )
}

/// Criterion 6: No profitable speculator entry against truthful polluters.
fn remark() -> Outcome {
    let cfg = config(vec![family(500, 5, 4, 0.5, true, &[Check::Remark])]);
    let start = Instant::now();
    let r = verify::verify(&cfg, &[Check::Remark]).unwrap();
    let elapsed = start.elapsed();
    let c = r.outcome(Check::Remark).unwrap();
    outcome(
        c.instances >= 500 && c.failed == 0 && elapsed < Duration::from_secs(120),
        format!("{}/{} with max speculator profit <= 0 on a 0.5 grid; {:.1?}", c.passed, c.instances, elapsed),
    )
}

/// Criterion 7: secondary-aware shading never raises a bid; the
/// best-response comparison runs on 200+ instances and its witnesses are
/// written out.
fn shading() -> Outcome {
    let mut rng = SeedStream::root(SEED).derive("shading", 0).rng();
    let mut construction_failures = 0;
    let bases = [StrategySpec::Truthful, StrategySpec::Shaded { factors: vec![1.0, 0.7, 0.4], clamp: true }];
    for _ in 0..2000 {
        let mut values: Vec<Money> = (0..3).map(|_| Money::from_nanos(rng.gen_range(0..=20_000_000_000))).collect();
        values.sort_unstable_by(|a, b| b.cmp(a));
        let profile = ValuationProfile::polluter(FirmId(1), values);
        let extra = rng.gen_range(0.0..=1.0);
        for base in &bases {
            let plain = static_schedule(base, &profile, 3).unwrap();
            let aware = secondary_aware_schedule(base, extra, &profile, 3).unwrap();
            if !aware.weakly_below(&plain) {
                construction_failures += 1;
            }
        }
    }

    let cfg = config(vec![Family::WorkedExample, family(200, 3, 2, 1.0, false, &[Check::Prop1])]);
    let r = verify::verify(&cfg, &[Check::Prop1]).unwrap();
    let dir = scratch("prop1");
    verify::write_witnesses(&dir, &r).unwrap();
    let c = r.outcome(Check::Prop1).unwrap();
    outcome(
        construction_failures == 0 && c.instances >= 200 && dir.join("witnesses.json").exists(),
        format!(
            "construction: 4000 schedules, {construction_failures} above base; best-response comparison \
             {}/{} pass ({:.1}%), {} witness(es) in {}",
            c.passed,
            c.instances,
            100.0 * c.pass_rate,
            c.witnesses.len(),
            dir.join("witnesses.json").display()
        ),
    )
}

const DETERMINISM_CONFIG: &str = r#"{
  "market": {
    "n": 5, "k": 4,
    "distribution": { "type": "uniform", "lo": 0, "hi": 10 },
    "speculator_present": true, "seed": 99, "units_per_firm": 2
  },
  "strategies": {
    "default": { "kind": "shaded", "factors": [1.0, 0.6] },
    "5": { "kind": "speculator_grid", "bid_grid": [0, 3, 6, 9], "mc_samples": 16 }
  },
  "secondary": { "enabled": true, "beta": 0.4, "cost_floor": true },
  "banking": { "enabled": true, "cap_per_firm": 1 },
  "rounds": 5,
  "replications": 24
}"#;

/// Criterion 8: Byte-identical output across reruns and thread counts.
fn determinism() -> Outcome {
    let dir = scratch("determinism");
    let cfg = dir.join("scenario.json");
    fs::write(&cfg, DETERMINISM_CONFIG).unwrap();
    // Same output dir every time: the resolved config in summary.json records it.
    let out = dir.join("out");
    let run = |name: &str, threads: Option<&str>, env: Option<&str>| -> Vec<Vec<u8>> {
        let _ = fs::remove_dir_all(&out);
        let mut cmd = Command::new(bin());
        cmd.arg("run").arg(&cfg).arg("--output-dir").arg(&out).env_remove("ETS_SIM_THREADS");
        if let Some(t) = threads {
            cmd.arg("--threads").arg(t);
        }
        if let Some(t) = env {
            cmd.env("ETS_SIM_THREADS", t);
        }
        let status = cmd.output().unwrap().status;
        assert!(status.success(), "run {name} failed");
        ["rounds.csv", "trades.csv", "summary.json"].iter().map(|f| fs::read(out.join(f)).unwrap()).collect()
    };
    let a = run("a", None, None);
    let b = run("b", None, None);
    let c = run("c", Some("1"), None);
    let d = run("d", Some("4"), None);
    let e = run("e", None, Some("3"));
    let same = [&b, &c, &d, &e].iter().all(|x| **x == a);
    let trades = a[1].iter().filter(|c| **c == b'\n').count().saturating_sub(1);
    outcome(same, format!("5 runs (default, 1, 4 threads, env 3) byte-identical: {same}; {trades} trades"))
}

fn main() {
    let start = Instant::now();
    let (c3, c4) = efficiency_and_resale();
    let results = [
        ("1 worked-example replay", golden_replay()),
        ("2 resale epilogues", resale_epilogues()),
        ("3 surplus max <=> efficiency", c3),
        ("4 resale restores efficiency", c4),
        ("5 speculator price monotonicity", price_monotonicity()),
        ("6 no speculator profit vs truthful", remark()),
        ("7 resale-aware shading", shading()),
        ("8 determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name:<36} {}  {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} of {} criteria passed in {:.1?}", results.len() - failed, results.len(), start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
