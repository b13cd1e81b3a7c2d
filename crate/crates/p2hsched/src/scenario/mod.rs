//! Scenario ingestion, validation, and persistence.
//!
//! A scenario is stored as one JSON document plus sidecar CSVs for the long
//! series (forecasts, downstream load, uncertainty samples), so the document
//! stays diff-able while bulk data lives in columnar files.

mod presets;

pub use presets::{preset, preset_names, stress_variant};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device::{AfgUnit, BesUnit, DownstreamLoad, ElectrolyzerUnit, PvUnit, WtUnit};
use crate::drcc::SampleSet;
use crate::error::{Error, Result};
use crate::model::NetworkModel;

/// Benchmark mode switch: CM1 drops all frequency-security constraints, CM2
/// keeps them but bars the hydrogen plant from frequency support, PM is the
/// full co-optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "CM1")]
    Cm1,
    #[serde(rename = "CM2")]
    Cm2,
    #[serde(rename = "PM")]
    Pm,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CM1" => Ok(Mode::Cm1),
            "CM2" => Ok(Mode::Cm2),
            "PM" => Ok(Mode::Pm),
            other => Err(Error::Config(format!("unknown mode {other}; expected CM1, CM2 or PM"))),
        }
    }
}

/// System-wide frequency-security configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyConfig {
    /// Nominal frequency, Hz.
    pub f_n: f64,
    /// Nadir deviation limit, Hz.
    pub nadir_lim: f64,
    /// RoCoF limit, Hz/s.
    pub rocof_lim: f64,
    /// Quasi-steady-state deviation limit, Hz.
    pub qss_lim: f64,
    /// Deadband thresholds, Hz.
    pub db1: f64,
    pub db2: f64,
    /// Times at which the deviation crosses each deadband, s.
    pub t_db1: f64,
    pub t_db2: f64,
    /// PFR delivery times per resource class, s: storage, electrolyzer,
    /// wind, generator.
    pub t_b: f64,
    pub t_e: f64,
    pub t_w: f64,
    pub t_g: f64,
    /// Load-step contingency as a fraction of total served load.
    pub contingency_frac: f64,
}

impl FrequencyConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.f_n <= 0.0 {
            errs.push("nominal frequency must be positive".to_string());
        }
        if self.nadir_lim <= 0.0 || self.rocof_lim <= 0.0 || self.qss_lim <= 0.0 {
            errs.push("frequency limits must be positive".to_string());
        }
        if !(0.0 <= self.db1 && self.db1 < self.db2) {
            errs.push("need 0 ≤ db1 < db2".to_string());
        }
        if !(0.0 <= self.t_db1 && self.t_db1 < self.t_db2) {
            errs.push("need 0 ≤ t_db1 < t_db2".to_string());
        }
        // Delivery-time ordering contract for the staged PFR model.
        if !(self.t_e > self.t_b) {
            errs.push(format!("need t_e > t_b, got t_e = {}, t_b = {}", self.t_e, self.t_b));
        }
        if !(self.t_b > self.t_db2 - self.t_db1) {
            errs.push(format!(
                "need t_b > t_db2 − t_db1, got t_b = {}, window = {}",
                self.t_b,
                self.t_db2 - self.t_db1
            ));
        }
        if !(self.t_g > self.t_w) {
            errs.push(format!("need t_g > t_w, got t_g = {}, t_w = {}", self.t_g, self.t_w));
        }
        if !(0.0 < self.contingency_frac && self.contingency_frac < 1.0) {
            errs.push("contingency fraction must be in (0, 1)".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// Empirical forecast-error sample sets per uncertainty source. Errors are
/// treated as identically distributed across periods, so one set per source
/// covers the horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    /// Plant-level wind forecast error, MW (dimension 1).
    pub wind: SampleSet,
    /// Joint renewable error for the regulation-reserve balance: (wind, pv)
    /// plant-level errors, MW (dimension 2).
    pub renewable: SampleSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemScenario {
    pub name: String,
    pub schema_version: u32,
    /// Number of scheduling periods.
    pub horizon: usize,
    /// Period length, h.
    pub dt_h: f64,
    pub mode: Mode,
    pub seed: u64,
    pub electrolyzers: Vec<ElectrolyzerUnit>,
    pub afgs: Vec<AfgUnit>,
    pub wts: Vec<WtUnit>,
    pub pvs: Vec<PvUnit>,
    pub bess: Vec<BesUnit>,
    pub load: DownstreamLoad,
    pub network: NetworkModel,
    pub freq: FrequencyConfig,
    pub uncertainty: UncertaintyConfig,
    /// Optional hydrogen price override, CNY/kg, applied to every
    /// electrolyzer on load. The shipped presets carry the published per-unit
    /// price value directly; see the README for the unit caveat.
    #[serde(default)]
    pub h2_price_override: Option<f64>,
    /// Compressor power draw per hydrogen throughput, MW per kg/h.
    #[serde(default)]
    pub k_comp: f64,
    /// Downstream hydrogen delivery cap across all units, kg/h.
    #[serde(default)]
    pub q_delivery_lim: Option<f64>,
}

impl SystemScenario {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.horizon == 0 {
            errs.push("horizon must be at least one period".to_string());
        }
        if self.dt_h <= 0.0 {
            errs.push("period length must be positive".to_string());
        }
        let mut collect = |r: Result<()>| {
            if let Err(Error::Validation(mut v)) = r {
                errs.append(&mut v);
            }
        };
        for e in &self.electrolyzers {
            collect(e.validate());
        }
        for g in &self.afgs {
            collect(g.validate());
        }
        for b in &self.bess {
            collect(b.validate());
        }
        collect(self.network.validate());
        collect(self.freq.validate());
        collect(self.uncertainty.wind.validate());
        collect(self.uncertainty.renewable.validate());
        if self.uncertainty.wind.dim() != 1 {
            errs.push("wind sample set must be one-dimensional".to_string());
        }
        if self.uncertainty.renewable.dim() != 2 {
            errs.push("renewable sample set must be two-dimensional (wind, pv)".to_string());
        }
        for w in &self.wts {
            if w.forecast.len() != self.horizon {
                errs.push(format!(
                    "wind unit {}: forecast covers {} of {} periods",
                    w.id,
                    w.forecast.len(),
                    self.horizon
                ));
            }
            if w.forecast.iter().any(|&p| p < 0.0 || p > w.capacity + 1e-9) {
                errs.push(format!("wind unit {}: forecast outside [0, capacity]", w.id));
            }
            if !(0.0 <= w.k_deload_max && w.k_deload_max < 1.0) {
                errs.push(format!("wind unit {}: deload fraction must be in [0, 1)", w.id));
            }
        }
        for p in &self.pvs {
            if p.forecast.len() != self.horizon {
                errs.push(format!(
                    "pv unit {}: forecast covers {} of {} periods",
                    p.id,
                    p.forecast.len(),
                    self.horizon
                ));
            }
            if p.forecast.iter().any(|&x| x < 0.0 || x > p.capacity + 1e-9) {
                errs.push(format!("pv unit {}: forecast outside [0, capacity]", p.id));
            }
        }
        if self.load.p_d.len() != self.horizon {
            errs.push(format!(
                "downstream load covers {} of {} periods",
                self.load.p_d.len(),
                self.horizon
            ));
        }
        if self.load.p_d.iter().any(|&x| x < 0.0) {
            errs.push("downstream load must be nonnegative".to_string());
        }
        // Ids must be unique across the whole fleet for variable naming.
        let mut ids = std::collections::HashSet::new();
        for id in self.unit_ids() {
            if !ids.insert(id.clone()) {
                errs.push(format!("duplicate unit id {id}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn unit_ids(&self) -> Vec<String> {
        let mut ids = Vec::new();
        ids.extend(self.electrolyzers.iter().map(|u| u.id.clone()));
        ids.extend(self.afgs.iter().map(|u| u.id.clone()));
        ids.extend(self.wts.iter().map(|u| u.id.clone()));
        ids.extend(self.pvs.iter().map(|u| u.id.clone()));
        ids.extend(self.bess.iter().map(|u| u.id.clone()));
        ids
    }

    /// Total renewable forecast in one period, MW.
    pub fn renewable_forecast(&self, t: usize) -> f64 {
        self.wts.iter().map(|w| w.forecast[t]).sum::<f64>()
            + self.pvs.iter().map(|p| p.forecast[t]).sum::<f64>()
    }

    /// Deterministic content digest over the full document (series included).
    pub fn checksum(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex::encode(hasher.finalize())
    }
}

// ---------------------------------------------------------------------------
// Persistence: JSON document + sidecar CSVs
// ---------------------------------------------------------------------------

const WIND_FORECAST_CSV: &str = "wind_forecast.csv";
const PV_FORECAST_CSV: &str = "pv_forecast.csv";
const LOAD_CSV: &str = "load.csv";
const WIND_SAMPLES_CSV: &str = "samples_wind.csv";
const RENEWABLE_SAMPLES_CSV: &str = "samples_renewable.csv";

/// Write the scenario under `dir` as scenario.json plus sidecar CSVs.
pub fn save(scenario: &SystemScenario, dir: &Path) -> Result<PathBuf> {
    scenario.validate()?;
    std::fs::create_dir_all(dir)?;

    let mut doc = scenario.clone();
    for w in &mut doc.wts {
        w.forecast.clear();
    }
    for p in &mut doc.pvs {
        p.forecast.clear();
    }
    doc.load.p_d.clear();
    doc.uncertainty.wind.samples.clear();
    doc.uncertainty.renewable.samples.clear();

    let json_path = dir.join("scenario.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&doc)?)?;

    write_series_csv(
        &dir.join(WIND_FORECAST_CSV),
        scenario.horizon,
        &scenario.wts.iter().map(|w| (w.id.as_str(), w.forecast.as_slice())).collect::<Vec<_>>(),
    )?;
    write_series_csv(
        &dir.join(PV_FORECAST_CSV),
        scenario.horizon,
        &scenario.pvs.iter().map(|p| (p.id.as_str(), p.forecast.as_slice())).collect::<Vec<_>>(),
    )?;
    write_series_csv(
        &dir.join(LOAD_CSV),
        scenario.horizon,
        &[("p_d", scenario.load.p_d.as_slice())],
    )?;
    write_samples_csv(&dir.join(WIND_SAMPLES_CSV), &["wind"], &scenario.uncertainty.wind)?;
    write_samples_csv(
        &dir.join(RENEWABLE_SAMPLES_CSV),
        &["wind", "pv"],
        &scenario.uncertainty.renewable,
    )?;
    Ok(json_path)
}

/// Load a scenario from its JSON document, pulling sidecar CSVs from the
/// same directory. Returns a fully validated scenario or a structured error.
pub fn load(json_path: &Path) -> Result<SystemScenario> {
    if !json_path.exists() {
        return Err(Error::Config(format!("scenario file {} does not exist", json_path.display())));
    }
    let dir = json_path.parent().unwrap_or_else(|| Path::new("."));
    let mut scenario: SystemScenario = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;

    let wind = read_series_csv(&dir.join(WIND_FORECAST_CSV))?;
    for w in &mut scenario.wts {
        w.forecast = take_series(&wind, &w.id, WIND_FORECAST_CSV)?;
    }
    let pv = read_series_csv(&dir.join(PV_FORECAST_CSV))?;
    for p in &mut scenario.pvs {
        p.forecast = take_series(&pv, &p.id, PV_FORECAST_CSV)?;
    }
    let load = read_series_csv(&dir.join(LOAD_CSV))?;
    scenario.load.p_d = take_series(&load, "p_d", LOAD_CSV)?;
    scenario.uncertainty.wind.samples = read_samples_csv(&dir.join(WIND_SAMPLES_CSV), 1)?;
    scenario.uncertainty.renewable.samples =
        read_samples_csv(&dir.join(RENEWABLE_SAMPLES_CSV), 2)?;

    if let Some(price) = scenario.h2_price_override {
        for e in &mut scenario.electrolyzers {
            e.cost_h2 = price;
        }
    }
    scenario.validate()?;
    Ok(scenario)
}

fn write_series_csv(path: &Path, horizon: usize, cols: &[(&str, &[f64])]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["period".to_string()];
    header.extend(cols.iter().map(|(id, _)| id.to_string()));
    w.write_record(&header)?;
    for t in 0..horizon {
        let mut rec = vec![t.to_string()];
        for (id, series) in cols {
            let v = series.get(t).ok_or_else(|| {
                Error::Contract(format!("series {id} shorter than horizon {horizon}"))
            })?;
            rec.push(format!("{v}"));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_series_csv(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    if !path.exists() {
        return Err(Error::Config(format!("missing sidecar file {}", path.display())));
    }
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut cols: Vec<(String, Vec<f64>)> =
        headers.iter().skip(1).map(|h| (h.clone(), Vec::new())).collect();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        for (k, col) in cols.iter_mut().enumerate() {
            let cell = rec.get(k + 1).ok_or_else(|| {
                Error::Config(format!("{}: row {row} missing column {}", path.display(), col.0))
            })?;
            col.1.push(cell.parse::<f64>().map_err(|_| {
                Error::Config(format!(
                    "{}: row {row}, column {}: cannot parse {cell:?} as a number",
                    path.display(),
                    col.0
                ))
            })?);
        }
    }
    Ok(cols)
}

fn take_series(cols: &[(String, Vec<f64>)], id: &str, file: &str) -> Result<Vec<f64>> {
    cols.iter()
        .find(|(name, _)| name == id)
        .map(|(_, v)| v.clone())
        .ok_or_else(|| Error::Config(format!("{file}: no column for unit {id}")))
}

fn write_samples_csv(path: &Path, dims: &[&str], set: &SampleSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["sample".to_string()];
    header.extend(dims.iter().map(|d| d.to_string()));
    w.write_record(&header)?;
    for (i, s) in set.samples.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(s.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_samples_csv(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    let cols = read_series_csv(path)?;
    if cols.len() != dim {
        return Err(Error::Config(format!(
            "{}: expected {dim} sample columns, found {}",
            path.display(),
            cols.len()
        )));
    }
    let n = cols.first().map_or(0, |(_, v)| v.len());
    Ok((0..n).map(|i| cols.iter().map(|(_, v)| v[i]).collect()).collect())
}
