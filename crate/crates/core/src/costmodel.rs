//! Battery investment cost with economies of scale, O&M and annuities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct CostInputs<T> {
    /// Cell price, €/kWh.
    pub cost_sm: T,
    /// Inverter price, €/kW.
    pub cost_inv: T,
    /// Capacity threshold for economies of scale, kWh.
    pub c_l: T,
    /// Inverter size threshold, kW.
    pub c_k: T,
    pub cell_exponent: T,
    pub inverter_exponent: T,
    pub om_rate_ces: T,
    pub om_rate_hes: T,
    pub interest: T,
    pub lifetime_years: u32,
    /// Price linearly below the thresholds instead of applying the power law
    /// for every size.
    pub linear_below_threshold: bool,
}

impl<T: Scalar> CostInputs<T> {
    /// 2015 prices.
    pub fn reference() -> Self {
        Self {
            cost_sm: T::lit(500.0),
            cost_inv: T::lit(200.0),
            c_l: T::lit(10.0),
            c_k: T::lit(10.0),
            cell_exponent: T::lit(0.9),
            inverter_exponent: T::lit(0.7),
            om_rate_ces: T::lit(0.015),
            om_rate_hes: T::zero(),
            interest: T::lit(0.04),
            lifetime_years: 20,
            linear_below_threshold: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |e: T| e > T::zero() && e <= T::one();
        if !in_unit(self.cell_exponent) || !in_unit(self.inverter_exponent) {
            return Err(Error::Config("cost exponents must lie in (0, 1]".into()));
        }
        if !(self.interest > T::zero()) {
            return Err(Error::Config("interest must be > 0".into()));
        }
        if !(self.c_l > T::zero() && self.c_k > T::zero()) {
            return Err(Error::Config("cost thresholds must be > 0".into()));
        }
        if !(self.cost_sm >= T::zero() && self.cost_inv >= T::zero()) {
            return Err(Error::Config("component prices must be >= 0".into()));
        }
        if !(self.om_rate_ces >= T::zero() && self.om_rate_hes >= T::zero()) {
            return Err(Error::Config("O&M rates must be >= 0".into()));
        }
        if self.lifetime_years == 0 {
            return Err(Error::Config("lifetime must be >= 1 year".into()));
        }
        Ok(())
    }

    pub fn om_rate(&self, topology: Topology) -> T {
        match topology {
            Topology::Ces => self.om_rate_ces,
            Topology::Hes => self.om_rate_hes,
        }
    }

    pub fn with_prices(&self, prices: TrendPoint<T>) -> Self {
        Self {
            cost_sm: prices.cost_sm,
            cost_inv: prices.cost_inv,
            ..*self
        }
    }
}

impl<T: Scalar> Default for CostInputs<T> {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendPoint<T> {
    pub cost_sm: T,
    pub cost_inv: T,
}

/// Component prices per reference year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostTrend<T> {
    points: BTreeMap<u32, TrendPoint<T>>,
}

impl<T: Scalar> CostTrend<T> {
    pub fn new(points: BTreeMap<u32, TrendPoint<T>>) -> Result<Self> {
        let trend = Self { points };
        trend.validate()?;
        Ok(trend)
    }

    /// 2015 {500, 200}, 2025 {200, 100}, 2035 {150, 70}.
    pub fn reference() -> Self {
        let p = |sm: f64, inv: f64| TrendPoint {
            cost_sm: T::lit(sm),
            cost_inv: T::lit(inv),
        };
        Self {
            points: BTreeMap::from([(2015, p(500.0, 200.0)), (2025, p(200.0, 100.0)), (2035, p(150.0, 70.0))]),
        }
    }

    /// Prices must not increase from one year to the next.
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Config("cost trend is empty".into()));
        }
        let pts: Vec<_> = self.points.iter().collect();
        for w in pts.windows(2) {
            let (y0, a) = w[0];
            let (y1, b) = w[1];
            if b.cost_sm > a.cost_sm || b.cost_inv > a.cost_inv {
                return Err(Error::Config(format!(
                    "cost trend increases between {y0} and {y1}"
                )));
            }
        }
        Ok(())
    }

    pub fn years(&self) -> impl Iterator<Item = u32> + '_ {
        self.points.keys().copied()
    }

    pub fn get(&self, year: u32) -> Result<TrendPoint<T>> {
        self.points
            .get(&year)
            .copied()
            .ok_or_else(|| Error::Config(format!("no cost trend entry for year {year}")))
    }

    /// `base` with the component prices of `year`.
    pub fn inputs_for(&self, year: u32, base: &CostInputs<T>) -> Result<CostInputs<T>> {
        Ok(base.with_prices(self.get(year)?))
    }
}

impl<T: Scalar> Default for CostTrend<T> {
    fn default() -> Self {
        Self::reference()
    }
}

/// Investment breakdown of one storage system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemCost<T> {
    pub cells: T,
    pub inverter: T,
    pub total: T,
    pub om_per_year: T,
}

fn scaled_power_law<T: Scalar>(size: T, threshold: T, exponent: T, price: T, linear_below: bool) -> T {
    if size <= T::zero() {
        return T::zero();
    }
    if linear_below && size <= threshold {
        return size * price;
    }
    (size / threshold).powf(exponent) * threshold * price
}

fn non_negative<T: Scalar>(x: T, what: &str) -> Result<()> {
    if x >= T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} {x} must be >= 0")))
    }
}

/// Cell cost `(C/C_l)^e · C_l · cost_sm`.
pub fn cell_cost<T: Scalar>(c_nom: T, inputs: &CostInputs<T>) -> Result<T> {
    non_negative(c_nom, "capacity")?;
    Ok(scaled_power_law(
        c_nom,
        inputs.c_l,
        inputs.cell_exponent,
        inputs.cost_sm,
        inputs.linear_below_threshold,
    ))
}

/// Inverter cost for an inverter sized at half the maximum SOC.
pub fn inverter_cost<T: Scalar>(soc_max: T, inputs: &CostInputs<T>) -> Result<T> {
    non_negative(soc_max, "maximum SOC")?;
    let size = T::lit(0.5) * soc_max;
    Ok(scaled_power_law(
        size,
        inputs.c_k,
        inputs.inverter_exponent,
        inputs.cost_inv,
        inputs.linear_below_threshold,
    ))
}

/// Investment and yearly O&M for one unit of `c_nom` kWh.
pub fn total_cost<T: Scalar>(c_nom: T, topology: Topology, inputs: &CostInputs<T>) -> Result<SystemCost<T>> {
    let cells = cell_cost(c_nom, inputs)?;
    let inverter = inverter_cost(c_nom, inputs)?;
    let total = cells + inverter;
    Ok(SystemCost {
        cells,
        inverter,
        total,
        om_per_year: inputs.om_rate(topology) * total,
    })
}

/// Capital recovery factor.
pub fn crf<T: Scalar>(interest: T, lifetime_years: u32) -> T {
    let n = T::from_u32(lifetime_years).expect("lifetime representable");
    let q = (T::one() + interest).powf(n);
    q * interest / (q - T::one())
}

pub fn eac<T: Scalar>(total_cost: T, om_per_year: T, inputs: &CostInputs<T>) -> T {
    crf(inputs.interest, inputs.lifetime_years) * total_cost + om_per_year
}

/// EAC of a whole installation: one pooled CES unit of `aggregate` kWh, or
/// `units` equal HES units sharing `aggregate`.
pub fn installation_eac<T: Scalar>(
    aggregate: T,
    units: usize,
    topology: Topology,
    inputs: &CostInputs<T>,
) -> Result<T> {
    match topology {
        Topology::Ces => {
            let c = total_cost(aggregate, topology, inputs)?;
            Ok(eac(c.total, c.om_per_year, inputs))
        }
        Topology::Hes => {
            let n = T::from_usize(units.max(1)).expect("unit count representable");
            let c = total_cost(aggregate / n, topology, inputs)?;
            Ok(eac(c.total, c.om_per_year, inputs) * n)
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn inputs() -> CostInputs<f64> {
        CostInputs::reference()
    }

    #[test]
    fn cell_cost_examples() {
        assert_abs_diff_eq!(cell_cost(10.0, &inputs()).unwrap(), 5_000.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cell_cost(20.0, &inputs()).unwrap(), 9_330.3, epsilon = 0.1);
        assert_eq!(cell_cost(0.0, &inputs()).unwrap(), 0.0);
        assert!(cell_cost(-1.0, &inputs()).is_err());
    }

    #[test]
    fn inverter_cost_examples() {
        assert_abs_diff_eq!(inverter_cost(20.0, &inputs()).unwrap(), 2_000.0, epsilon = 1e-9);
        // 2000 · 3^0.7
        assert_abs_diff_eq!(inverter_cost(60.0, &inputs()).unwrap(), 4_315.338_56, epsilon = 1e-4);
        assert_eq!(inverter_cost(0.0, &inputs()).unwrap(), 0.0);
        assert!(inverter_cost(-1.0, &inputs()).is_err());
    }

    #[test]
    fn total_cost_examples() {
        let ces = total_cost(15.0, Topology::Ces, &inputs()).unwrap();
        // 1.5^0.9 · 5000 and 0.75^0.7 · 2000
        assert_abs_diff_eq!(ces.cells, 7_201.9, epsilon = 0.1);
        assert_abs_diff_eq!(ces.inverter, 1_635.2, epsilon = 0.1);
        assert_abs_diff_eq!(ces.om_per_year, 0.015 * ces.total, epsilon = 1e-9);

        let hes = total_cost(2.5, Topology::Hes, &inputs()).unwrap();
        assert_eq!(hes.om_per_year, 0.0);

        let late = CostTrend::reference().inputs_for(2035, &inputs()).unwrap();
        for c in [2.5, 15.0, 60.0] {
            let a = total_cost(c, Topology::Ces, &inputs()).unwrap().total;
            let b = total_cost(c, Topology::Ces, &late).unwrap().total;
            assert!(b < a);
        }
    }

    #[test]
    fn linear_below_threshold_variant() {
        let mut i = inputs();
        i.linear_below_threshold = true;
        assert_abs_diff_eq!(cell_cost(2.5, &i).unwrap(), 1_250.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cell_cost(20.0, &i).unwrap(), 9_330.3, epsilon = 0.1);
    }

    #[test]
    fn crf_examples() {
        assert_abs_diff_eq!(crf(0.04, 20), 0.073582, epsilon = 1e-6);
        assert_abs_diff_eq!(crf(0.04, 1), 1.04, epsilon = 1e-12);
        assert_abs_diff_eq!(crf(1e-9, 20), 1.0 / 20.0, epsilon = 1e-6);
    }

    #[test]
    fn eac_examples() {
        assert_abs_diff_eq!(eac(1_686.3, 0.0, &inputs()), 124.08, epsilon = 0.01);
        assert!((eac(1_686.3, 0.0, &inputs()) - 123.0).abs() / 123.0 < 0.01);
        assert_eq!(eac(0.0, 42.0, &inputs()), 42.0);

        // Literal power law at 2.5 kWh lands within 15 % of the published 123 €/a.
        let hes = total_cost(2.5, Topology::Hes, &inputs()).unwrap();
        let v = eac(hes.total, hes.om_per_year, &inputs());
        assert!((v - 123.0).abs() / 123.0 < 0.15, "{v}");
    }

    #[test]
    fn trend_is_monotone_and_ordered() {
        let t = CostTrend::<f64>::reference();
        assert_eq!(t.years().collect::<Vec<_>>(), vec![2015, 2025, 2035]);
        let e: Vec<f64> = t
            .years()
            .map(|y| {
                let i = t.inputs_for(y, &inputs()).unwrap();
                let c = total_cost(15.0, Topology::Ces, &i).unwrap();
                eac(c.total, c.om_per_year, &i)
            })
            .collect();
        assert!(e[2] < e[1] && e[1] < e[0]);
        assert!(t.get(2020).is_err());

        let bad = BTreeMap::from([
            (2015, TrendPoint { cost_sm: 100.0, cost_inv: 50.0 }),
            (2025, TrendPoint { cost_sm: 200.0, cost_inv: 50.0 }),
        ]);
        assert!(CostTrend::new(bad).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let i = CostInputs::<f32>::reference();
        assert!((cell_cost(20.0f32, &i).unwrap() - 9_330.3).abs() < 0.5);
        assert!((crf(0.04f32, 20) - 0.073582).abs() < 1e-5);
    }

    #[test]
    fn subadditivity_grid() {
        let i = inputs();
        for step in 1..=240 {
            let c = step as f64 * 0.5;
            for k in 2..=10 {
                let kf = k as f64;
                let pooled_cells = cell_cost(c, &i).unwrap();
                let split_cells = kf * cell_cost(c / kf, &i).unwrap();
                assert!(pooled_cells <= split_cells + 1e-9, "cells C={c} k={k}");
                let pooled_inv = inverter_cost(c, &i).unwrap();
                let split_inv = kf * inverter_cost(c / kf, &i).unwrap();
                assert!(pooled_inv <= split_inv + 1e-9, "inverter C={c} k={k}");
            }
        }
    }

    proptest! {
        #[test]
        fn eac_strictly_increasing(total in 0.0f64..1e5, om in 0.0f64..1e3, dt in 1e-3f64..1e3, dom in 1e-3f64..1e2) {
            let i = inputs();
            prop_assert!(eac(total + dt, om, &i) > eac(total, om, &i));
            prop_assert!(eac(total, om + dom, &i) > eac(total, om, &i));
        }
    }
}
