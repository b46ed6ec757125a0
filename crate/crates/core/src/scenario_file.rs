//! TOML scenario documents.
//!
//! A document holds the raw figures (population in persons, energy in raw
//! units) plus a `[units]` table that converts them into model units when the
//! scenario is built.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{income_class, validate_scenario, CityState, ObjectiveWeights, Scenario, ScenarioParams};
use crate::error::{Error, Result, ValidationReport};
use crate::money::Money;

/// The bundled eight-city scenario, byte-for-byte as shipped.
pub const DEFAULT_SCENARIO_TOML: &str = include_str!("../../../scenarios/default-8city.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    pub initial_budget: Money,
    pub add_re_cost: Money,
    pub add_nre_cost: Money,
    pub remove_re_cost: Money,
    pub remove_nre_cost: Money,
    pub re_increment: f64,
    pub nre_increment: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub op_cost_scale: f64,
    pub low_income_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsDoc {
    /// Model population per person.
    pub population_scale: f64,
    /// Model energy-units per raw energy-unit (supplies, demand, increments).
    pub energy_scale: f64,
}

impl Default for UnitsDoc {
    fn default() -> Self {
        UnitsDoc { population_scale: 1.0, energy_scale: 1.0 }
    }
}

/// One city row. Every field is optional at parse time so that a missing
/// field can be reported together with the city it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CityDoc {
    pub name: Option<String>,
    pub population: Option<f64>,
    pub low_income_share: Option<f64>,
    pub re_supply: Option<f64>,
    pub nre_supply: Option<f64>,
    pub baseline_demand: Option<f64>,
    pub demand_stddev: Option<f64>,
    pub re_op_cost: Option<f64>,
    pub nre_op_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub params: ParamsDoc,
    pub weights: ObjectiveWeights,
    #[serde(default)]
    pub units: UnitsDoc,
    pub cities: Vec<CityDoc>,
}

impl ScenarioDoc {
    pub fn parse(text: &str, origin: &Path) -> Result<ScenarioDoc> {
        toml::from_str(text).map_err(|e| Error::Parse { path: origin.to_path_buf(), message: e.to_string() })
    }

    pub fn read(path: &Path) -> Result<ScenarioDoc> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }

    pub fn default_doc() -> ScenarioDoc {
        Self::parse(DEFAULT_SCENARIO_TOML, Path::new("scenarios/default-8city.toml"))
            .expect("bundled scenario parses")
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }

    /// Converts to model units and validates. All problems are collected
    /// into one report.
    pub fn build(&self) -> Result<Scenario> {
        let mut report = ValidationReport::default();
        let UnitsDoc { population_scale, energy_scale } = self.units;
        for (field, v) in [("population_scale", population_scale), ("energy_scale", energy_scale)] {
            if !(v.is_finite() && v > 0.0) {
                report.push("units", field, format!("scale must be finite and > 0, got {v}"));
            }
        }
        let p = &self.params;
        let params = ScenarioParams {
            initial_budget: p.initial_budget,
            add_re_cost: p.add_re_cost,
            add_nre_cost: p.add_nre_cost,
            remove_re_cost: p.remove_re_cost,
            remove_nre_cost: p.remove_nre_cost,
            re_increment: p.re_increment * energy_scale,
            nre_increment: p.nre_increment * energy_scale,
            gamma: p.gamma,
            weights: self.weights,
            horizon: p.horizon,
            op_cost_scale: p.op_cost_scale,
            low_income_threshold: p.low_income_threshold,
        };

        let mut cities = Vec::with_capacity(self.cities.len());
        for (pos, row) in self.cities.iter().enumerate() {
            let subject = match &row.name {
                Some(n) => format!("city '{n}'"),
                None => format!("city #{}", pos + 1),
            };
            let mut incomplete = row.name.is_none();
            let mut missing = |field: &str, v: Option<f64>| -> f64 {
                v.unwrap_or_else(|| {
                    report.push(&subject, field, "missing field");
                    incomplete = true;
                    0.0
                })
            };
            let population = missing("population", row.population);
            let share = missing("low_income_share", row.low_income_share);
            let re_supply = missing("re_supply", row.re_supply);
            let nre_supply = missing("nre_supply", row.nre_supply);
            let baseline_demand = missing("baseline_demand", row.baseline_demand);
            let demand_stddev = missing("demand_stddev", row.demand_stddev);
            let re_op_cost = missing("re_op_cost", row.re_op_cost);
            let nre_op_cost = missing("nre_op_cost", row.nre_op_cost);
            if row.name.is_none() {
                report.push(&subject, "name", "missing field");
            }
            if incomplete {
                continue;
            }
            let income_indicator = match income_class(share, p.low_income_threshold) {
                Ok(flag) => flag,
                Err(e) => {
                    report.push(&subject, "low_income_share", e.to_string());
                    continue;
                }
            };
            let baseline = baseline_demand * energy_scale;
            cities.push(CityState {
                name: row.name.clone().unwrap_or_default().into(),
                demand: baseline,
                re_supply: re_supply * energy_scale,
                nre_supply: nre_supply * energy_scale,
                population: population * population_scale,
                income_indicator,
                baseline_demand: baseline,
                demand_stddev: demand_stddev * energy_scale,
                re_op_cost,
                nre_op_cost,
            });
        }

        match validate_scenario(params, cities) {
            Ok(s) if report.is_empty() => Ok(s),
            Ok(_) => Err(report.into()),
            Err(more) => {
                // Incomplete rows were skipped above, so nothing is reported twice.
                report.violations.extend(more.violations);
                Err(report.into())
            }
        }
    }
}

/// Where a scenario came from, for run logs.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Bundled,
    File(PathBuf),
}

/// Reads, converts and validates a scenario. The name `default` resolves to
/// the bundled eight-city file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    load_scenario_doc(path)?.build()
}

pub fn load_scenario_doc(path: &Path) -> Result<ScenarioDoc> {
    match resolve_source(path) {
        ScenarioSource::Bundled => Ok(ScenarioDoc::default_doc()),
        ScenarioSource::File(p) => ScenarioDoc::read(&p),
    }
}

pub fn resolve_source(path: &Path) -> ScenarioSource {
    if path.as_os_str() == "default" && !path.exists() {
        ScenarioSource::Bundled
    } else {
        ScenarioSource::File(path.to_path_buf())
    }
}

pub fn default_scenario() -> Scenario {
    ScenarioDoc::default_doc().build().expect("bundled scenario is valid")
}
