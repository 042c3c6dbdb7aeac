//! Report and plot-data files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::HarnessError;
use crate::harness::ComparisonReport;

pub const REPORT_FILE: &str = "report.json";
pub const CAPACITY_FILE: &str = "figure6_capacity.csv";
pub const PROFIT_FILE: &str = "figure6_profit.csv";
pub const COSTS_FILE: &str = "figure7_costs.csv";
pub const CORRELATIONS_FILE: &str = "correlations.csv";

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    csv::Writer::from_path(path).map_err(HarnessError::from)
}

/// Writes `report.json` and the four plot CSVs into `dir`.
pub fn emit_plot_data(report: &ComparisonReport, dir: &Path) -> Result<(), HarnessError> {
    create_dir(dir)?;
    write_json(report, &dir.join(REPORT_FILE))?;

    let mut w = writer(&dir.join(CAPACITY_FILE))?;
    w.write_record(["community_size", "mechanism", "capacity_per_firm_mean", "capacity_per_firm_variance", "repetitions"])?;
    for r in &report.sweep {
        w.write_record([
            r.community_size.to_string(),
            r.mechanism.to_string(),
            r.capacity_per_firm_mean.to_string(),
            r.capacity_per_firm_variance.to_string(),
            r.repetitions.to_string(),
        ])?;
    }
    w.flush().map_err(|source| HarnessError::Io { path: dir.join(CAPACITY_FILE), source })?;

    let mut w = writer(&dir.join(PROFIT_FILE))?;
    w.write_record(["community_size", "mechanism", "profit_per_firm_mean", "profit_per_firm_variance", "repetitions"])?;
    for r in &report.sweep {
        w.write_record([
            r.community_size.to_string(),
            r.mechanism.to_string(),
            r.profit_per_firm_mean.to_string(),
            r.profit_per_firm_variance.to_string(),
            r.repetitions.to_string(),
        ])?;
    }
    w.flush().map_err(|source| HarnessError::Io { path: dir.join(PROFIT_FILE), source })?;

    let mut w = writer(&dir.join(COSTS_FILE))?;
    w.write_record([
        "mechanism",
        "total_capacity_kwh",
        "mean_daily_cost_cents",
        "cost_se",
        "mean_daily_saving_cents",
        "saving_se",
        "saving_fraction",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.mechanism.to_string(),
            r.total_capacity_kwh.to_string(),
            r.mean_daily_cost.value.to_string(),
            r.mean_daily_cost.se.to_string(),
            r.mean_daily_profit.value.to_string(),
            r.mean_daily_profit.se.to_string(),
            r.saving_fraction.to_string(),
        ])?;
    }
    w.flush().map_err(|source| HarnessError::Io { path: dir.join(COSTS_FILE), source })?;

    let mut w = writer(&dir.join(CORRELATIONS_FILE))?;
    w.write_record(["bin_low", "bin_high", "pairs"])?;
    if let Some(c) = &report.correlations {
        let width = 2.0 / c.counts.len() as f64;
        for (lo, n) in c.bin_edges.iter().zip(&c.counts) {
            w.write_record([lo.to_string(), (lo + width).to_string(), n.to_string()])?;
        }
        w.write_record(["undefined".to_string(), "undefined".to_string(), c.undefined.to_string()])?;
    }
    w.flush().map_err(|source| HarnessError::Io { path: dir.join(CORRELATIONS_FILE), source })?;
    Ok(())
}
