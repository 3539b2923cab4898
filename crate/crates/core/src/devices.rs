//! Device models: PV array, heat pump, gas boiler and battery.
//!
//! All functions take energies per quarter-hour step. Battery discharge is
//! measured at the delivery point, i.e. after the discharge efficiency.

use serde::{Deserialize, Serialize};

use crate::profiles::{QuarterHourSeries, Unit};
use crate::{Error, Result, Scalar, STEP_HOURS};

/// Relative tolerance used when checking SOC and power bounds.
const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvSpec<T> {
    /// Module area in m².
    pub area: T,
    pub efficiency: T,
}

impl<T: Scalar> PvSpec<T> {
    pub fn new(area: T, efficiency: T) -> Result<Self> {
        if !(area >= T::zero()) {
            return Err(Error::InvalidArgument(format!("PV area {area} must be >= 0")));
        }
        if !(efficiency > T::zero() && efficiency <= T::one()) {
            return Err(Error::InvalidArgument(format!(
                "PV efficiency {efficiency} outside (0, 1]"
            )));
        }
        Ok(Self { area, efficiency })
    }

    pub fn with_area(area: T) -> Result<Self> {
        Self::new(area, T::lit(0.18))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpSpec<T> {
    /// kW_th
    pub thermal_power_max: T,
    pub cop: T,
}

impl<T: Scalar> HpSpec<T> {
    pub fn new(thermal_power_max: T, cop: T) -> Result<Self> {
        if !(cop > T::one()) {
            return Err(Error::InvalidArgument(format!("COP {cop} must exceed 1")));
        }
        if !(thermal_power_max > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "heat pump power {thermal_power_max} must be > 0"
            )));
        }
        Ok(Self {
            thermal_power_max,
            cop,
        })
    }

    /// Largest heat output per step (kWh_th).
    pub fn step_cap(&self) -> T {
        self.thermal_power_max * T::lit(STEP_HOURS)
    }
}

impl<T: Scalar> Default for HpSpec<T> {
    fn default() -> Self {
        Self {
            thermal_power_max: T::lit(9.0),
            cop: T::lit(3.9),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgbSpec<T> {
    /// kW_th
    pub thermal_power_max: T,
    pub efficiency: T,
}

impl<T: Scalar> NgbSpec<T> {
    pub fn new(thermal_power_max: T, efficiency: T) -> Result<Self> {
        if !(efficiency > T::zero() && efficiency <= T::one()) {
            return Err(Error::InvalidArgument(format!(
                "boiler efficiency {efficiency} outside (0, 1]"
            )));
        }
        if !(thermal_power_max > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "boiler power {thermal_power_max} must be > 0"
            )));
        }
        Ok(Self {
            thermal_power_max,
            efficiency,
        })
    }

    pub fn step_cap(&self) -> T {
        self.thermal_power_max * T::lit(STEP_HOURS)
    }
}

impl<T: Scalar> Default for NgbSpec<T> {
    fn default() -> Self {
        Self {
            thermal_power_max: T::lit(9.0),
            efficiency: T::lit(0.95),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesSpec<T> {
    /// Usable capacity, kWh.
    pub capacity: T,
    /// Charge/discharge power per kWh of capacity (kW/kWh).
    pub p_to_e: T,
    pub eff_charge: T,
    pub eff_discharge: T,
    pub self_discharge_per_step: T,
    pub lifetime_years: u32,
}

impl<T: Scalar> BesSpec<T> {
    /// Battery with the default efficiencies (95 %/95 %), 0.001 % loss per
    /// step and 20 year lifetime.
    pub fn new(capacity: T, p_to_e: T) -> Result<Self> {
        let spec = Self {
            capacity,
            p_to_e,
            eff_charge: T::lit(0.95),
            eff_discharge: T::lit(0.95),
            self_discharge_per_step: T::lit(1e-5),
            lifetime_years: 20,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: T| x > T::zero() && x <= T::one();
        if !(self.capacity >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "capacity {} must be >= 0",
                self.capacity
            )));
        }
        if !(self.p_to_e > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "P/E ratio {} must be > 0",
                self.p_to_e
            )));
        }
        if !unit(self.eff_charge) || !unit(self.eff_discharge) {
            return Err(Error::InvalidArgument("efficiencies must lie in (0, 1]".into()));
        }
        if !(self.self_discharge_per_step >= T::zero() && self.self_discharge_per_step < T::one()) {
            return Err(Error::InvalidArgument("self-discharge must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Energy per step at the charging/delivery point (kWh).
    pub fn step_power_limit(&self) -> T {
        self.p_to_e * self.capacity * T::lit(STEP_HOURS)
    }

    pub fn retention(&self) -> T {
        T::one() - self.self_discharge_per_step
    }

    pub fn round_trip(&self) -> T {
        self.eff_charge * self.eff_discharge
    }

    /// Same battery with capacity multiplied by `factor` (power follows P/E).
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            capacity: self.capacity * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BesState<T> {
    /// kWh stored.
    pub soc: T,
}

impl<T: Scalar> BesState<T> {
    pub fn new(soc: T, spec: &BesSpec<T>) -> Result<Self> {
        check_soc(soc, spec)?;
        Ok(Self { soc })
    }

    pub fn empty() -> Self {
        Self { soc: T::zero() }
    }

    pub fn relative(&self, spec: &BesSpec<T>) -> T {
        if spec.capacity > T::zero() {
            self.soc / spec.capacity
        } else {
            T::zero()
        }
    }
}

fn tol<T: Scalar>(scale: T) -> T {
    T::lit(BOUND_TOL) * (T::one() + scale.abs())
}

fn check_soc<T: Scalar>(soc: T, spec: &BesSpec<T>) -> Result<()> {
    let t = tol(spec.capacity);
    if !(soc >= -t && soc <= spec.capacity + t) {
        return Err(Error::SocBounds {
            soc: soc.to_f64().unwrap_or(f64::NAN),
            capacity: spec.capacity.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// PV generation per step: `area · efficiency · yield[t]`.
pub fn pv_output(spec: &PvSpec<f64>, yield_per_m2: &QuarterHourSeries) -> Result<QuarterHourSeries> {
    if yield_per_m2.unit() != Unit::KwhPerM2 {
        return Err(Error::UnitMismatch {
            expected: Unit::KwhPerM2.to_string(),
            actual: yield_per_m2.unit().to_string(),
        });
    }
    yield_per_m2.scaled(spec.area * spec.efficiency, Unit::KwhEl)
}

/// Electricity drawn by the heat pump to deliver `heat_out` kWh_th in one step.
pub fn hp_electric<T: Scalar>(heat_out: T, spec: &HpSpec<T>) -> Result<T> {
    check_heat(heat_out, spec.step_cap())?;
    Ok(heat_out / spec.cop)
}

/// Fuel burnt by the boiler to deliver `heat_out` kWh_th in one step.
pub fn ngb_fuel<T: Scalar>(heat_out: T, spec: &NgbSpec<T>) -> Result<T> {
    check_heat(heat_out, spec.step_cap())?;
    Ok(heat_out / spec.efficiency)
}

fn check_heat<T: Scalar>(heat: T, cap: T) -> Result<()> {
    if !(heat >= T::zero()) {
        return Err(Error::InvalidArgument(format!("heat output {heat} must be >= 0")));
    }
    if heat > cap + tol(cap) {
        return Err(Error::ThermalCap {
            requested: heat.to_f64().unwrap_or(f64::NAN),
            limit: cap.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// One step of the SOC recursion
/// `soc' = soc·(1 − δ) + η_c·charge − discharge/η_d`.
pub fn bes_step<T: Scalar>(
    state: BesState<T>,
    charge_in: T,
    discharge_out: T,
    spec: &BesSpec<T>,
) -> Result<BesState<T>> {
    if !(charge_in >= T::zero() && discharge_out >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "charge {charge_in} and discharge {discharge_out} must be >= 0"
        )));
    }
    if charge_in > T::zero() && discharge_out > T::zero() {
        return Err(Error::SimultaneousChargeDischarge {
            charge: charge_in.to_f64().unwrap_or(f64::NAN),
            discharge: discharge_out.to_f64().unwrap_or(f64::NAN),
        });
    }
    let limit = spec.step_power_limit();
    let requested = charge_in.max(discharge_out);
    if requested > limit + tol(limit) {
        return Err(Error::PowerLimit {
            requested: requested.to_f64().unwrap_or(f64::NAN),
            limit: limit.to_f64().unwrap_or(f64::NAN),
        });
    }
    let soc = state.soc * spec.retention() + spec.eff_charge * charge_in
        - discharge_out / spec.eff_discharge;
    check_soc(soc, spec)?;
    Ok(BesState { soc })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    use super::*;

    fn battery(cap: f64) -> BesSpec<f64> {
        BesSpec::new(cap, 1.0).unwrap()
    }

    #[test]
    fn pv_output_examples() {
        let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let y = QuarterHourSeries::new(start, vec![0.1; 96], Unit::KwhPerM2).unwrap();
        let out = pv_output(&PvSpec::with_area(7.5).unwrap(), &y).unwrap();
        assert_abs_diff_eq!(out.values()[0], 0.135, epsilon = 1e-12);
        assert_eq!(out.unit(), Unit::KwhEl);

        let zero = pv_output(&PvSpec::with_area(0.0).unwrap(), &y).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));

        let double = pv_output(&PvSpec::with_area(15.0).unwrap(), &y).unwrap();
        for (a, b) in out.values().iter().zip(double.values()) {
            assert_abs_diff_eq!(2.0 * a, *b, epsilon = 1e-12);
        }

        let wrong = QuarterHourSeries::new(start, vec![0.1; 96], Unit::KwhEl).unwrap();
        assert!(matches!(
            pv_output(&PvSpec::with_area(1.0).unwrap(), &wrong),
            Err(Error::UnitMismatch { .. })
        ));
    }

    #[test]
    fn heat_pump_and_boiler() {
        let hp = HpSpec::<f64>::default();
        assert_eq!(hp_electric(0.0, &hp).unwrap(), 0.0);
        assert_abs_diff_eq!(hp_electric(2.25, &hp).unwrap(), 0.576923, epsilon = 1e-6);
        assert!(matches!(hp_electric(3.0, &hp), Err(Error::ThermalCap { .. })));

        let ngb = NgbSpec::<f64>::default();
        assert_eq!(ngb_fuel(0.0, &ngb).unwrap(), 0.0);
        assert_abs_diff_eq!(ngb_fuel(0.95, &ngb).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(ngb_fuel(2.3, &ngb), Err(Error::ThermalCap { .. })));
    }

    #[test]
    fn generic_over_f32() {
        let hp = HpSpec::<f32>::default();
        assert!((hp_electric(2.25f32, &hp).unwrap() - 0.576_923).abs() < 1e-5);
        let spec = BesSpec::<f32>::new(10.0, 1.0).unwrap();
        let s = bes_step(BesState::empty(), 1.0f32, 0.0, &spec).unwrap();
        assert!((s.soc - 0.95).abs() < 1e-6);
    }

    #[test]
    fn bes_step_examples() {
        let spec = battery(10.0);
        let idle = bes_step(BesState { soc: 1.0 }, 0.0, 0.0, &spec).unwrap();
        assert_abs_diff_eq!(idle.soc, 0.99999, epsilon = 1e-15);

        let charged = bes_step(BesState::empty(), 1.0, 0.0, &spec).unwrap();
        assert_abs_diff_eq!(charged.soc, 0.95, epsilon = 1e-15);

        // 0.95 delivered needs a 1.0 draw, more than 1.0·(1 − 1e-5) stored.
        assert!(matches!(
            bes_step(BesState { soc: 1.0 }, 0.0, 0.95, &spec),
            Err(Error::SocBounds { .. })
        ));
        assert!(matches!(
            bes_step(BesState { soc: 1.0 }, 0.5, 0.5, &spec),
            Err(Error::SimultaneousChargeDischarge { .. })
        ));
        assert!(matches!(
            bes_step(BesState::empty(), 2.6, 0.0, &spec),
            Err(Error::PowerLimit { .. })
        ));
        assert!(matches!(
            bes_step(BesState { soc: 9.9 }, 1.0, 0.0, &spec),
            Err(Error::SocBounds { .. })
        ));
    }

    #[test]
    fn monthly_self_discharge_just_below_three_percent() {
        let spec = battery(10.0);
        let mut s = BesState { soc: 10.0 };
        for _ in 0..2_880 {
            s = bes_step(s, 0.0, 0.0, &spec).unwrap();
        }
        let loss = 1.0 - s.soc / 10.0;
        assert_abs_diff_eq!(loss, 1.0 - (1.0f64 - 1e-5).powi(2880), epsilon = 1e-12);
        assert!(loss > 0.028 && loss < 0.03);
    }

    #[test]
    fn spec_validation() {
        assert!(PvSpec::new(-1.0, 0.18).is_err());
        assert!(PvSpec::new(1.0, 0.0).is_err());
        assert!(HpSpec::new(9.0, 1.0).is_err());
        assert!(NgbSpec::new(9.0, 1.2).is_err());
        assert!(BesSpec::new(-1.0, 1.0).is_err());
        assert!(BesSpec::new(1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_efficiency(energy in 0.01f64..2.5) {
            let mut spec = battery(10.0);
            spec.self_discharge_per_step = 0.0;
            let s = bes_step(BesState::empty(), energy, 0.0, &spec).unwrap();
            let delivered = s.soc * spec.eff_discharge;
            let s = bes_step(s, 0.0, delivered, &spec).unwrap();
            prop_assert!(s.soc.abs() < 1e-12);
            prop_assert!((delivered / energy - 0.9025).abs() < 1e-9);
        }

        #[test]
        fn step_never_leaves_bounds(soc in 0.0f64..=10.0, c in 0.0f64..3.0, d in 0.0f64..3.0, charge in any::<bool>()) {
            let spec = battery(10.0);
            let (c, d) = if charge { (c, 0.0) } else { (0.0, d) };
            if let Ok(next) = bes_step(BesState { soc }, c, d, &spec) {
                prop_assert!(next.soc >= -1e-8 && next.soc <= 10.0 + 1e-8);
            }
        }
    }
}
