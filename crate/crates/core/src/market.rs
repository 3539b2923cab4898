//! Flat retail tariff, feed-in remuneration, gas price and spot market.

use serde::{Deserialize, Serialize};

use crate::profiles::{QuarterHourSeries, Unit};
use crate::{Error, Result};

/// Components of the retail electricity price (€/kWh_el, VAT folded in).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetailComponents {
    pub sales_spot_mean: f64,
    pub sales_margin: f64,
    pub grid_fees: f64,
    pub levies_taxes: f64,
}

impl RetailComponents {
    pub fn total(&self) -> f64 {
        self.sales_spot_mean + self.sales_margin + self.grid_fees + self.levies_taxes
    }
}

impl Default for RetailComponents {
    /// 2015 reference: 0.2916 €/kWh in total.
    fn default() -> Self {
        Self {
            sales_spot_mean: 0.0316,
            sales_margin: 0.0396,
            grid_fees: 0.0729,
            levies_taxes: 0.1475,
        }
    }
}

/// Components of the gas price (€/kWh_fuel).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasComponents {
    pub base: f64,
    pub grid_levies: f64,
    pub margin: f64,
}

impl GasComponents {
    pub fn total(&self) -> f64 {
        self.base + self.grid_levies + self.margin
    }
}

impl Default for GasComponents {
    fn default() -> Self {
        Self {
            base: 0.031,
            grid_levies: 0.024,
            margin: 0.011,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TariffScheme {
    pub retail_components: RetailComponents,
    /// €/kWh_el paid for PV exported to the grid.
    pub feed_in: f64,
    pub gas_components: GasComponents,
    /// Informational: already contained in the retail total.
    pub vat_rate: f64,
    /// Energy charged into the CES for community self-consumption is exempt
    /// from levies and taxes.
    pub ces_selfconsumption_exempt: bool,
    /// Charge grid fees on CES deliveries to households.
    pub ces_grid_fees_apply: bool,
}

impl Default for TariffScheme {
    fn default() -> Self {
        Self {
            retail_components: RetailComponents::default(),
            feed_in: 0.124,
            gas_components: GasComponents::default(),
            vat_rate: 0.19,
            ces_selfconsumption_exempt: true,
            ces_grid_fees_apply: false,
        }
    }
}

impl TariffScheme {
    pub fn validate(&self) -> Result<()> {
        let r = &self.retail_components;
        let all = [
            r.sales_margin,
            r.grid_fees,
            r.levies_taxes,
            self.feed_in,
            self.gas_components.total(),
            self.vat_rate,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("tariff components must be finite and >= 0".into()));
        }
        if !(self.feed_in < retail_price(self)) {
            return Err(Error::Config(format!(
                "feed-in {} must be below the retail price {}",
                self.feed_in,
                retail_price(self)
            )));
        }
        Ok(())
    }

    pub fn gas_price(&self) -> f64 {
        self.gas_components.total()
    }

    /// Levy charged per kWh moved into the CES for community use.
    pub fn community_charge_levy(&self) -> f64 {
        storage_levy_rate(self, FlowKind::MscCharge)
    }

    /// Grid fee charged per kWh delivered by the CES to a household.
    pub fn community_delivery_fee(&self) -> f64 {
        if self.ces_grid_fees_apply {
            self.retail_components.grid_fees
        } else {
            0.0
        }
    }
}

/// Flat retail price: the sum of all components.
pub fn retail_price(scheme: &TariffScheme) -> f64 {
    scheme.retail_components.total()
}

/// Replaces the spot-derived sales component; margin, grid fees and levies
/// stay constant in absolute terms.
pub fn project_tariff(scheme: &TariffScheme, projected_spot_mean: f64) -> Result<TariffScheme> {
    if !(projected_spot_mean >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "projected spot mean {projected_spot_mean} must be >= 0"
        )));
    }
    let mut next = *scheme;
    next.retail_components.sales_spot_mean = projected_spot_mean;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    MscCharge,
    ArbCharge,
    ArbSell,
}

/// Surcharge on top of spot for storage flows. Arbitrage trades at pure spot.
pub fn storage_levy_rate(scheme: &TariffScheme, flow: FlowKind) -> f64 {
    match flow {
        FlowKind::MscCharge if !scheme.ces_selfconsumption_exempt => {
            scheme.retail_components.levies_taxes
        }
        _ => 0.0,
    }
}

/// Quarter-hourly wholesale prices.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotMarket {
    prices: QuarterHourSeries,
}

impl SpotMarket {
    /// 2015 reference mean, €/kWh.
    pub const REFERENCE_MEAN_2015: f64 = 0.0316;

    pub fn new(prices: QuarterHourSeries) -> Result<Self> {
        if prices.unit() != Unit::EurPerKwh {
            return Err(Error::UnitMismatch {
                expected: Unit::EurPerKwh.to_string(),
                actual: prices.unit().to_string(),
            });
        }
        Ok(Self { prices })
    }

    pub fn prices(&self) -> &QuarterHourSeries {
        &self.prices
    }

    pub fn mean(&self) -> f64 {
        self.prices.mean()
    }

    pub fn constant_like(&self, price: f64) -> Result<Self> {
        Self::new(
            self.prices
                .with_values(vec![price; self.prices.len()], Unit::EurPerKwh)?,
        )
    }
}
