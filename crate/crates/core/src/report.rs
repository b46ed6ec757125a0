//! CSV and JSON emitters for benchmark tables, episode traces and per-step
//! series. Every number is rounded to 6 significant digits before it is
//! written, so both formats carry identical values.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::domain::Scenario;
use crate::error::{Error, Result};
use crate::eval::{AggregateResult, EpisodeTrace, PolicyRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Format> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidArgument(format!("unknown output format '{other}' (expected csv or json)"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

/// Rounds to 6 significant digits.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

pub const RESULTS_HEADER: [&str; 15] = [
    "policy",
    "reward_mean",
    "reward_std",
    "re_pct_mean",
    "re_pct_std",
    "budget_used_mean",
    "budget_used_std",
    "low_cities_mean",
    "low_cities_std",
    "high_cities_mean",
    "high_cities_std",
    "low_pop_mean",
    "low_pop_std",
    "high_pop_mean",
    "high_pop_std",
];

/// One results row; field order matches [`RESULTS_HEADER`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub policy: String,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub re_pct_mean: f64,
    pub re_pct_std: f64,
    pub budget_used_mean: f64,
    pub budget_used_std: f64,
    pub low_cities_mean: f64,
    pub low_cities_std: f64,
    pub high_cities_mean: f64,
    pub high_cities_std: f64,
    pub low_pop_mean: f64,
    pub low_pop_std: f64,
    pub high_pop_mean: f64,
    pub high_pop_std: f64,
}

impl From<&AggregateResult> for ResultRow {
    fn from(a: &AggregateResult) -> ResultRow {
        ResultRow {
            policy: a.policy.clone(),
            reward_mean: sig6(a.reward.mean),
            reward_std: sig6(a.reward.std),
            re_pct_mean: sig6(100.0 * a.re_fraction.mean),
            re_pct_std: sig6(100.0 * a.re_fraction.std),
            budget_used_mean: sig6(a.budget_used.mean),
            budget_used_std: sig6(a.budget_used.std),
            low_cities_mean: sig6(a.low_income_cities.mean),
            low_cities_std: sig6(a.low_income_cities.std),
            high_cities_mean: sig6(a.high_income_cities.mean),
            high_cities_std: sig6(a.high_income_cities.std),
            low_pop_mean: sig6(a.low_income_population.mean),
            low_pop_std: sig6(a.low_income_population.std),
            high_pop_mean: sig6(a.high_income_population.mean),
            high_pop_std: sig6(a.high_income_population.std),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub action: String,
    pub reward: f64,
    pub action_cost: f64,
    pub op_cost: f64,
    pub op_shortfall: f64,
    pub budget_after: f64,
    pub re_supply_total: f64,
    pub nre_supply_total: f64,
    pub demand_total: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub policy: String,
    pub step: usize,
    pub reward_mean: f64,
    pub cumulative_discounted_reward_mean: f64,
    pub re_pct_mean: f64,
    pub budget_remaining_mean: f64,
    pub low_cities_mean: f64,
    pub high_cities_mean: f64,
    pub low_pop_mean: f64,
    pub high_pop_mean: f64,
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serialize(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Serialize(e.to_string()))
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn encode_rows<T: Serialize>(rows: &[T], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => csv_bytes(rows),
        Format::Json => json_bytes(rows),
    }
}

pub fn result_rows(table: &[&AggregateResult]) -> Vec<ResultRow> {
    table.iter().map(|&a| ResultRow::from(a)).collect()
}

/// Encodes the comparison table. Rows keep the table order (descending
/// reward).
pub fn encode_results(table: &[&AggregateResult], format: Format) -> Result<Vec<u8>> {
    if table.is_empty() {
        return Err(Error::InvalidArgument("results table is empty".into()));
    }
    let rows = result_rows(table);
    match format {
        // The header is written even when serde infers it, to pin the order.
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(RESULTS_HEADER).map_err(|e| Error::Serialize(e.to_string()))?;
            let mut w = {
                let bytes = w.into_inner().map_err(|e| Error::Serialize(e.to_string()))?;
                csv::WriterBuilder::new().has_headers(false).from_writer(bytes)
            };
            for r in &rows {
                w.serialize(r).map_err(|e| Error::Serialize(e.to_string()))?;
            }
            w.into_inner().map_err(|e| Error::Serialize(e.to_string()))
        }
        Format::Json => json_bytes(&rows),
    }
}

pub fn emit_results(table: &[&AggregateResult], format: Format, path: &Path) -> Result<()> {
    write_file(path, &encode_results(table, format)?)
}

pub fn trace_rows(trace: &EpisodeTrace, scenario: &Scenario) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .zip(trace.post_states())
        .map(|(r, after)| TraceRow {
            step: r.step,
            action: r.action.label(&scenario.cities),
            reward: sig6(r.reward),
            action_cost: r.action_cost.to_f64(),
            op_cost: r.op_cost.to_f64(),
            op_shortfall: r.op_shortfall.to_f64(),
            budget_after: r.budget_after.to_f64(),
            re_supply_total: sig6(after.cities.iter().map(|c| c.re_supply).sum()),
            nre_supply_total: sig6(after.cities.iter().map(|c| c.nre_supply).sum()),
            demand_total: sig6(r.demands.iter().sum()),
            note: r.note.clone().unwrap_or_default(),
        })
        .collect()
}

/// CSV gets one summary row per step; JSON gets the full trace including
/// state snapshots.
pub fn encode_trace(trace: &EpisodeTrace, scenario: &Scenario, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => csv_bytes(&trace_rows(trace, scenario)),
        Format::Json => json_bytes(trace),
    }
}

pub fn series_rows(runs: &[PolicyRun]) -> Vec<SeriesRow> {
    runs.iter()
        .flat_map(|run| {
            run.series.iter().map(move |p| SeriesRow {
                policy: run.aggregate.policy.clone(),
                step: p.step,
                reward_mean: sig6(p.reward),
                cumulative_discounted_reward_mean: sig6(p.cumulative_discounted_reward),
                re_pct_mean: sig6(100.0 * p.re_fraction),
                budget_remaining_mean: sig6(p.budget_remaining),
                low_cities_mean: sig6(p.low_income_cities),
                high_cities_mean: sig6(p.high_income_cities),
                low_pop_mean: sig6(p.low_income_population),
                high_pop_mean: sig6(p.high_income_population),
            })
        })
        .collect()
}

pub fn encode_series(runs: &[PolicyRun], format: Format) -> Result<Vec<u8>> {
    encode_rows(&series_rows(runs), format)
}

pub fn encode_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    json_bytes(value)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Writes files and deletes everything written so far if any write fails.
#[derive(Debug, Default)]
pub struct OutputSet {
    written: Vec<PathBuf>,
    created_dirs: Vec<PathBuf>,
}

impl OutputSet {
    pub fn new() -> OutputSet {
        OutputSet::default()
    }

    pub fn create_dir(&mut self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
            self.created_dirs.push(dir.to_path_buf());
        }
        Ok(())
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_file(path, bytes)?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.written
    }

    /// Removes written files and the directories this set created.
    pub fn rollback(self) {
        for p in self.written.iter().rev() {
            let _ = std::fs::remove_file(p);
        }
        for d in self.created_dirs.iter().rev() {
            let _ = std::fs::remove_dir(d);
        }
    }
}
