//! `run` and `sweep`: simulate a scenario and write the result files.

use std::fs;
use std::path::{Path, PathBuf};

use ets_core::scenario::{apply_sweep, OutputFormat, ScenarioConfig, SweepParam};
use ets_core::simulation::{run_simulation, FieldStats, SimulationReport, Summary};
use serde::Serialize;

use crate::{io_error, load_json, CliError};

pub const ROUNDS_HEADER: [&str; 11] = [
    "replication",
    "round",
    "clearing_price",
    "revenue",
    "bidder_surplus",
    "speculator_profit",
    "total_rent",
    "holder_value_surplus",
    "net_participant_surplus",
    "efficiency_ratio",
    "misallocated_units",
];

pub const TRADES_HEADER: [&str; 8] =
    ["replication", "round", "seller", "buyer", "price", "seller_value", "buyer_value", "rent"];

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

/// Loads and validates a scenario, applying command-line overrides.
pub fn load_scenario(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig, CliError> {
    let mut cfg: ScenarioConfig = load_json(path)?;
    if let Some(seed) = overrides.seed {
        cfg.market.seed = seed;
    }
    if let Some(dir) = &overrides.output_dir {
        cfg.output.dir = dir.to_string_lossy().into_owned();
    }
    cfg.validate().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    seed: u64,
    config: &'a ScenarioConfig,
    summary: &'a Summary,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| io_error(path, e))
}

fn write_rounds(path: &Path, report: &SimulationReport) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(ROUNDS_HEADER).map_err(|e| io_error(path, e))?;
    for (rep, rounds) in report.replications.iter().enumerate() {
        for r in rounds {
            let m = &r.metrics;
            w.write_record([
                rep.to_string(),
                r.round_index.to_string(),
                m.clearing_price.to_string(),
                m.revenue.to_string(),
                m.bidder_surplus.to_string(),
                m.speculator_profit.to_string(),
                m.total_rent.to_string(),
                m.holder_value_surplus.to_string(),
                m.net_participant_surplus.to_string(),
                m.efficiency_ratio.to_string(),
                m.misallocated_units.to_string(),
            ])
            .map_err(|e| io_error(path, e))?;
        }
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn write_trades(path: &Path, report: &SimulationReport) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(TRADES_HEADER).map_err(|e| io_error(path, e))?;
    for (rep, rounds) in report.replications.iter().enumerate() {
        for r in rounds {
            for t in r.secondary.iter().flat_map(|s| &s.trades) {
                w.write_record([
                    rep.to_string(),
                    r.round_index.to_string(),
                    t.seller.to_string(),
                    t.buyer.to_string(),
                    t.price.to_string(),
                    t.seller_value.to_string(),
                    t.buyer_value.to_string(),
                    t.rent.to_string(),
                ])
                .map_err(|e| io_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

/// Runs the simulation and writes rounds.csv, trades.csv and summary.json.
pub fn run(cfg: &ScenarioConfig) -> Result<SimulationReport, CliError> {
    let report = run_simulation(cfg)?;
    let dir = Path::new(&cfg.output.dir);
    ensure_dir(dir)?;
    if cfg.output.formats.contains(&OutputFormat::Csv) {
        write_rounds(&dir.join("rounds.csv"), &report)?;
        write_trades(&dir.join("trades.csv"), &report)?;
    }
    if cfg.output.formats.contains(&OutputFormat::Json) {
        let file = SummaryFile { seed: cfg.market.seed, config: cfg, summary: &report.summary };
        write_json(&dir.join("summary.json"), &file)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub value: String,
    pub summary: Summary,
}

fn stats_fields(s: &Summary) -> [(&'static str, &FieldStats); 9] {
    [
        ("clearing_price", &s.clearing_price),
        ("revenue", &s.revenue),
        ("bidder_surplus", &s.bidder_surplus),
        ("speculator_profit", &s.speculator_profit),
        ("total_rent", &s.total_rent),
        ("holder_value_surplus", &s.holder_value_surplus),
        ("net_participant_surplus", &s.net_participant_surplus),
        ("efficiency_ratio", &s.efficiency_ratio),
        ("misallocated_units", &s.misallocated_units),
    ]
}

/// Runs the scenario once per value. Every cell reuses the root seed, so
/// cells differ only in the swept parameter.
pub fn sweep(base: &ScenarioConfig, param: SweepParam, values: &[String]) -> Result<Vec<SweepCell>, CliError> {
    let cells = values
        .iter()
        .map(|v| apply_sweep(base, param, v).map_err(|e| CliError::Config(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(cells.len());
    for (value, cfg) in values.iter().zip(&cells) {
        let report = run_simulation(cfg)?;
        out.push(SweepCell { value: value.trim().to_string(), summary: report.summary });
    }

    let dir = Path::new(&base.output.dir);
    ensure_dir(dir)?;
    let path = dir.join("sweep.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["param".to_string(), "value".to_string(), "rows".to_string()];
    for (name, _) in stats_fields(&out[0].summary) {
        header.extend(["mean", "std", "min", "max"].map(|s| format!("{name}_{s}")));
    }
    w.write_record(&header).map_err(|e| io_error(&path, e))?;
    for cell in &out {
        let mut rec = vec![param.name().to_string(), cell.value.clone(), cell.summary.rows.to_string()];
        for (_, st) in stats_fields(&cell.summary) {
            rec.extend([st.mean, st.std, st.min, st.max].map(|x| x.to_string()));
        }
        w.write_record(&rec).map_err(|e| io_error(&path, e))?;
    }
    w.flush().map_err(|e| io_error(&path, e))?;
    Ok(out)
}
