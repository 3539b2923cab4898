//! Techno-economic engine for comparing household (HES) and community (CES)
//! battery storage under competing demand-side flexibility options.
//!
//! The crate is organised bottom-up:
//!
//! * [`profiles`] – quarter-hourly series, CSV ingestion, load splitting and
//!   the seeded synthetic community dataset.
//! * [`devices`] – PV, heat pump, gas boiler and battery models.
//! * [`market`] – tariff components, spot prices and storage levies.
//! * [`dispatch`] – the two-step rolling-horizon optimiser (prosumers first,
//!   then the storage operator) plus a dynamic-programming oracle.
//! * [`costmodel`] – investment cost with economies of scale and annuities.
//! * [`assessment`] – AFB/EAC/EAV, self-consumption, self-sufficiency,
//!   utilisation and dispersion statistics.
//! * [`reduction`] – SOC duration curves and capacity reduction analysis.
//! * [`scenarios`] – the five flexibility scenarios over the PV×BES grid and
//!   the multi-year investment assessment.
//! * [`config`] / [`report`] – JSON configuration and table/curve emission.
//! * [`verification`] – oracle battery and published-table self-consistency.
//!
//! Formula-level modules are generic over the scalar type (see [`Scalar`]);
//! the `f64` aliases below are what the optimisation layers use.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assessment;
pub mod config;
pub mod costmodel;
pub mod devices;
pub mod dispatch;
mod error;
pub mod market;
pub mod profiles;
pub mod reduction;
pub mod report;
mod scalar;
pub mod scenarios;
pub mod verification;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Storage topology of the community.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// One battery per household, used only by that household.
    Hes,
    /// A single pooled battery run by the utility.
    Ces,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Hes => "hes",
            Topology::Ces => "ces",
        }
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hes" => Ok(Topology::Hes),
            "ces" => Ok(Topology::Ces),
            other => Err(Error::Config(format!("unknown topology `{other}` (expected hes|ces)"))),
        }
    }
}

/// Quarter-hours per day.
pub const STEPS_PER_DAY: usize = 96;
/// Quarter-hours in a non-leap year.
pub const STEPS_PER_YEAR: usize = 35_040;
/// Hours represented by one step.
pub const STEP_HOURS: f64 = 0.25;

pub type PvSpec = devices::PvSpec<f64>;
pub type HpSpec = devices::HpSpec<f64>;
pub type NgbSpec = devices::NgbSpec<f64>;
pub type BesSpec = devices::BesSpec<f64>;
pub type BesState = devices::BesState<f64>;
pub type CostInputs = costmodel::CostInputs<f64>;
pub type CostTrend = costmodel::CostTrend<f64>;
pub type SystemCost = costmodel::SystemCost<f64>;
pub type EnergyAggregates = assessment::EnergyAggregates<f64>;
