//! Study configuration (JSON). Every key is optional; unknown keys are
//! rejected with their path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assessment::UrMode;
use crate::dispatch::{DispatchParams, DrDirection};
use crate::{BesSpec, CostInputs, CostTrend, Error, HpSpec, NgbSpec, Result, Topology};

/// Battery parameters other than size and P/E, which come from the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BesTemplate {
    pub eff_charge: f64,
    pub eff_discharge: f64,
    pub self_discharge_per_step: f64,
    pub lifetime_years: u32,
}

impl Default for BesTemplate {
    fn default() -> Self {
        let b = BesSpec::new(1.0, 1.0).expect("reference battery");
        Self {
            eff_charge: b.eff_charge,
            eff_discharge: b.eff_discharge,
            self_discharge_per_step: b.self_discharge_per_step,
            lifetime_years: b.lifetime_years,
        }
    }
}

impl BesTemplate {
    pub fn spec(&self, capacity: f64, p_to_e: f64) -> Result<BesSpec> {
        let b = BesSpec {
            capacity,
            p_to_e,
            eff_charge: self.eff_charge,
            eff_discharge: self.eff_discharge,
            self_discharge_per_step: self.self_discharge_per_step,
            lifetime_years: self.lifetime_years,
        };
        b.validate()?;
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceSettings {
    pub pv_efficiency: f64,
    pub hp: HpSpec,
    pub ngb: NgbSpec,
    pub bes: BesTemplate,
}

impl Default for DeviceSettings {
    fn default() -> Self {
        Self {
            pv_efficiency: 0.18,
            hp: HpSpec::default(),
            ngb: NgbSpec::default(),
            bes: BesTemplate::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrSettings {
    pub max_share: f64,
    pub window_hours: f64,
    pub direction: DrDirection,
}

impl Default for DrSettings {
    fn default() -> Self {
        Self {
            max_share: 0.4,
            window_hours: 4.0,
            direction: DrDirection::Symmetric,
        }
    }
}

/// What the storage run is compared against for AFB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// No storage and no community sharing.
    #[default]
    NoSharing,
    /// Zero-capacity CES with direct sharing still active.
    ZeroCapacitySharing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssessmentSettings {
    pub ur_mode: UrMode,
    pub baseline: Baseline,
}

impl Default for AssessmentSettings {
    fn default() -> Self {
        Self {
            ur_mode: UrMode::State,
            baseline: Baseline::NoSharing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReductionSettings {
    /// Relative loss of stored self-consumption still counted as lossless.
    pub tolerance: f64,
    /// Capacity step of the bisection, as a fraction of the full size.
    pub resolution: f64,
    /// Spot trading during the capacity sweep. Off by default: stored
    /// self-consumption is decided in the first operator pass anyway.
    pub arbitrage: bool,
}

impl Default for ReductionSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            resolution: 0.01,
            arbitrage: false,
        }
    }
}

/// Which part of the study to run and on what data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySettings {
    pub households: usize,
    /// Seed of the synthetic dataset, used when `data_dir` is absent.
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    pub scenarios: Vec<u8>,
    pub topologies: Vec<Topology>,
    pub pv_areas: Vec<f64>,
    pub bes_sizes: Vec<f64>,
    pub years: Vec<u32>,
    /// Year whose prices the dispatch-based KPIs use.
    pub reference_year: u32,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            households: 6,
            seed: 1,
            data_dir: None,
            scenarios: vec![1, 2, 3, 4, 5],
            topologies: vec![Topology::Hes, Topology::Ces],
            pv_areas: vec![0.0, 7.5, 15.0, 22.5, 30.0],
            bes_sizes: vec![0.0, 2.5, 5.0, 7.5, 10.0],
            years: vec![2015, 2025, 2035],
            reference_year: 2015,
        }
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub dispatch: DispatchParams,
    pub cost: CostInputs,
    pub cost_trend: CostTrend,
    pub devices: DeviceSettings,
    pub dr: DrSettings,
    pub assessment: AssessmentSettings,
    pub reduction: ReductionSettings,
    pub study: StudySettings,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.dispatch.validate()?;
        self.cost.validate()?;
        self.cost_trend.validate()?;
        if !(self.devices.pv_efficiency > 0.0 && self.devices.pv_efficiency <= 1.0) {
            return Err(Error::Config("devices.pv_efficiency must lie in (0, 1]".into()));
        }
        HpSpec::new(self.devices.hp.thermal_power_max, self.devices.hp.cop)?;
        NgbSpec::new(self.devices.ngb.thermal_power_max, self.devices.ngb.efficiency)?;
        self.devices.bes.spec(1.0, 1.0)?;
        if !(0.0..=1.0).contains(&self.dr.max_share) {
            return Err(Error::Config("dr.max_share must lie in [0, 1]".into()));
        }
        if !(self.dr.window_hours > 0.0) {
            return Err(Error::Config("dr.window_hours must be > 0".into()));
        }
        let r = &self.reduction;
        if !(r.tolerance >= 0.0 && r.tolerance < 1.0) || !(r.resolution > 0.0 && r.resolution <= 0.5) {
            return Err(Error::Config("reduction tolerance/resolution out of range".into()));
        }
        let s = &self.study;
        if s.households == 0 {
            return Err(Error::Config("study.households must be >= 1".into()));
        }
        if let Some(id) = s.scenarios.iter().find(|id| !(1..=5).contains(*id)) {
            return Err(Error::Config(format!("unknown scenario {id}")));
        }
        if s.pv_areas.iter().chain(&s.bes_sizes).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("grid values must be finite and >= 0".into()));
        }
        for y in s.years.iter().chain(std::iter::once(&s.reference_year)) {
            self.cost_trend.get(*y)?;
        }
        Ok(())
    }
}

pub fn parse_config(text: &str) -> Result<Config> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("at `{path}`: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves_defaults() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.dr.max_share, 0.4);
        assert_eq!(c.study.households, 6);
        assert_eq!(c.dispatch.window_steps, 96);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config(r#"{"foo": 1}"#).unwrap_err().to_string();
        assert!(err.contains("foo"), "{err}");
        let err = parse_config(r#"{"dispatch": {"tariff": {"feed_inn": 0.1}}}"#).unwrap_err().to_string();
        assert!(err.contains("dispatch.tariff") && err.contains("feed_inn"), "{err}");
    }

    #[test]
    fn dr_share_override() {
        let c = parse_config(r#"{"dr": {"max_share": 0.4, "window_hours": 4}}"#).unwrap();
        assert_eq!(c.dr, DrSettings::default());
        assert!(parse_config(r#"{"dr": {"max_share": 1.5}}"#).is_err());
    }

    #[test]
    fn bad_selectors_rejected() {
        assert!(parse_config(r#"{"study": {"scenarios": [9]}}"#).is_err());
        assert!(parse_config(r#"{"study": {"years": [2020]}}"#).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = Config::default();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(parse_config(&text).unwrap(), c);
    }
}
