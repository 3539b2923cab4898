//! Key performance indicators of annual runs.

use serde::{Deserialize, Serialize};

use crate::dispatch::{Community, DispatchResult, CHARGED_SOC_THRESHOLD, FLOW_TOL};
use crate::{Error, Result, Scalar, Topology};

/// Yearly energy sums (kWh) and step counts behind the ratio KPIs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyAggregates<T> {
    pub e_pv: T,
    pub e_el: T,
    pub e_hp: T,
    pub e_el_from_pv: T,
    pub e_hp_from_pv: T,
    pub e_storage_from_pv: T,
    pub e_gc: T,
    /// Charged steps; averaged over units when there are several batteries.
    pub t_charged: T,
    pub t_all: T,
}

impl<T: Scalar> EnergyAggregates<T> {
    pub fn validate(&self) -> Result<()> {
        let tol = T::lit(1e-6) * (T::one() + self.e_pv);
        let parts = self.e_el_from_pv + self.e_hp_from_pv + self.e_storage_from_pv;
        let all = [
            self.e_pv,
            self.e_el,
            self.e_hp,
            self.e_el_from_pv,
            self.e_hp_from_pv,
            self.e_storage_from_pv,
            self.e_gc,
            self.t_charged,
            self.t_all,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidArgument("aggregates must be finite and non-negative".into()));
        }
        if parts > self.e_pv + tol || self.e_el_from_pv > self.e_el + tol || self.e_hp_from_pv > self.e_hp + tol {
            return Err(Error::InvalidArgument("PV components exceed their totals".into()));
        }
        if self.t_charged > self.t_all {
            return Err(Error::InvalidArgument("T_charged exceeds T_all".into()));
        }
        Ok(())
    }
}

/// Self-consumption ratios. `tot = el + hp + storage`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scr<T> {
    pub tot: T,
    pub el: T,
    pub hp: T,
    pub storage: T,
}

/// `None` when there is no PV generation.
pub fn scr<T: Scalar>(agg: &EnergyAggregates<T>) -> Option<Scr<T>> {
    if agg.e_pv <= T::zero() {
        return None;
    }
    let el = agg.e_el_from_pv / agg.e_pv;
    let hp = agg.e_hp_from_pv / agg.e_pv;
    let storage = agg.e_storage_from_pv / agg.e_pv;
    Some(Scr {
        tot: el + hp + storage,
        el,
        hp,
        storage,
    })
}

pub fn ssr<T: Scalar>(agg: &EnergyAggregates<T>) -> Result<T> {
    let demand = agg.e_el + agg.e_hp;
    if demand <= T::zero() {
        return Err(Error::Undefined("SSR with zero demand"));
    }
    Ok((T::one() - agg.e_gc / demand).max(T::zero()).min(T::one()))
}

pub fn ur<T: Scalar>(agg: &EnergyAggregates<T>) -> Result<T> {
    if agg.t_all <= T::zero() {
        return Err(Error::Undefined("UR with no time steps"));
    }
    Ok(agg.t_charged / agg.t_all)
}

pub fn mean<T: Scalar>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(Error::Undefined("mean of an empty sequence"));
    }
    let n = T::from_usize(values.len()).expect("length fits the scalar");
    Ok(values.iter().fold(T::zero(), |a, &v| a + v) / n)
}

/// Coefficient of variation with the population standard deviation.
pub fn cv<T: Scalar>(values: &[T]) -> Result<T> {
    let mu = mean(values)?;
    if mu == T::zero() {
        return Err(Error::Undefined("coefficient of variation with zero mean"));
    }
    let n = T::from_usize(values.len()).expect("length fits the scalar");
    let var = values.iter().fold(T::zero(), |a, &v| a + (v - mu) * (v - mu)) / n;
    Ok(var.sqrt() / mu.abs())
}

pub fn coverage_ratio<T: Scalar>(afb_total: T, eac: T) -> Result<T> {
    if eac == T::zero() {
        return Err(Error::Undefined("coverage ratio with zero EAC"));
    }
    Ok(afb_total / eac)
}

/// Mean and coefficient of variation over a set of sensitivity cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSummary<T> {
    pub mean: T,
    pub cv: T,
}

pub fn grid_summary<T: Scalar>(values: &[T]) -> Result<GridSummary<T>> {
    Ok(GridSummary {
        mean: mean(values)?,
        cv: cv(values)?,
    })
}

/// How a step counts as charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UrMode {
    /// Stored energy above a small threshold.
    #[default]
    State,
    /// Charging flow above a small threshold.
    Flow,
}

/// Annual benefit of storage against a baseline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Afb {
    pub eu: Vec<f64>,
    pub op: f64,
    pub total: f64,
}

pub fn afb(with_storage: &DispatchResult, baseline: &DispatchResult) -> Result<Afb> {
    if with_storage.topology != baseline.topology
        || with_storage.households.len() != baseline.households.len()
        || with_storage.steps() != baseline.steps()
    {
        return Err(Error::Mismatch("AFB runs differ in topology, households or horizon".into()));
    }
    let eu: Vec<f64> = baseline
        .eu_cost
        .iter()
        .zip(&with_storage.eu_cost)
        .map(|(b, w)| b - w)
        .collect();
    let op = with_storage.op_profit - baseline.op_profit;
    let total = eu.iter().sum::<f64>() + op;
    Ok(Afb { eu, op, total })
}

/// Sums a finished run into [`EnergyAggregates`].
pub fn aggregate(result: &DispatchResult, community: &Community, mode: UrMode) -> Result<EnergyAggregates<f64>> {
    let n = result.steps();
    if community.households.len() != result.households.len() || community.steps() != n {
        return Err(Error::Mismatch("run and community differ".into()));
    }
    let mut a = EnergyAggregates {
        e_pv: 0.0,
        e_el: 0.0,
        e_hp: 0.0,
        e_el_from_pv: 0.0,
        e_hp_from_pv: 0.0,
        e_storage_from_pv: 0.0,
        e_gc: 0.0,
        t_charged: 0.0,
        t_all: n as f64,
    };
    for (f, h) in result.households.iter().zip(&community.households) {
        a.e_pv += h.series.pv.iter().sum::<f64>();
        for t in 0..n {
            a.e_el += f.pv_to_load[t] + f.grid_to_load[t] + f.storage_to_load[t];
            a.e_hp += f.hp_electric(t);
            a.e_el_from_pv += f.pv_to_load[t];
            a.e_hp_from_pv += f.pv_to_hp[t];
            a.e_storage_from_pv += f.pv_to_storage[t];
            a.e_gc += f.grid_purchase(t);
        }
    }
    a.t_charged = charged_steps(result, mode)?;
    Ok(a)
}

fn charged_steps(result: &DispatchResult, mode: UrMode) -> Result<f64> {
    let ids = result.storage_ids();
    if ids.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for id in &ids {
        let count = match (mode, id) {
            (UrMode::State, _) => {
                let (soc, _) = result.soc(*id)?;
                soc.iter().filter(|&&s| s > CHARGED_SOC_THRESHOLD).count()
            }
            (UrMode::Flow, crate::dispatch::StorageId::Ces) => {
                let op = result.operator.as_ref().expect("CES run has operator flows");
                (0..op.len()).filter(|&t| op.charge(t) > FLOW_TOL).count()
            }
            (UrMode::Flow, crate::dispatch::StorageId::Hes(h)) => {
                let f = &result.households[*h];
                (0..f.len()).filter(|&t| f.storage_charge(t) > FLOW_TOL).count()
            }
        };
        total += count as f64;
    }
    Ok(match result.topology {
        Topology::Ces => total,
        Topology::Hes => total / ids.len() as f64,
    })
}

/// KPIs of one sensitivity cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub afb_eu: Vec<f64>,
    pub afb_op: f64,
    pub afb_total: f64,
    pub eac: f64,
    pub eav: f64,
    pub scr: Option<Scr<f64>>,
    pub ssr: Option<f64>,
    pub ur: f64,
}

impl KpiReport {
    pub fn new(afb: Afb, eac: f64, agg: &EnergyAggregates<f64>) -> Result<Self> {
        agg.validate()?;
        Ok(Self {
            eav: afb.total - eac,
            afb_eu: afb.eu,
            afb_op: afb.op,
            afb_total: afb.total,
            eac,
            scr: scr(agg),
            ssr: ssr(agg).ok(),
            ur: ur(agg)?,
        })
    }

    pub fn coverage(&self) -> Result<f64> {
        coverage_ratio(self.afb_total, self.eac)
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn agg(e_pv: f64, el: f64, hp: f64, st: f64) -> EnergyAggregates<f64> {
        EnergyAggregates {
            e_pv,
            e_el: 3000.0,
            e_hp: 500.0,
            e_el_from_pv: el,
            e_hp_from_pv: hp,
            e_storage_from_pv: st,
            e_gc: 1500.0,
            t_charged: 0.0,
            t_all: 35_040.0,
        }
    }

    #[test]
    fn scr_example() {
        let s = scr(&agg(1000.0, 440.0, 0.0, 280.0)).unwrap();
        assert_abs_diff_eq!(s.tot, 0.72, epsilon = 1e-12);
        assert_abs_diff_eq!(s.el, 0.44, epsilon = 1e-12);
        assert_abs_diff_eq!(s.storage, 0.28, epsilon = 1e-12);
        assert!(scr(&agg(0.0, 0.0, 0.0, 0.0)).is_none());
        let direct = scr(&agg(1000.0, 1000.0, 0.0, 0.0)).unwrap();
        assert_eq!((direct.tot, direct.el), (1.0, 1.0));
    }

    #[test]
    fn ssr_and_ur_edges() {
        let mut a = agg(1000.0, 0.0, 0.0, 0.0);
        a.e_gc = 0.0;
        assert_eq!(ssr(&a).unwrap(), 1.0);
        a.e_gc = 3500.0;
        assert_eq!(ssr(&a).unwrap(), 0.0);
        assert_eq!(ur(&a).unwrap(), 0.0);
        a.t_charged = a.t_all;
        assert_eq!(ur(&a).unwrap(), 1.0);
        a.e_el = 0.0;
        a.e_hp = 0.0;
        assert!(ssr(&a).is_err());
    }

    #[test]
    fn cv_examples() {
        assert_eq!(cv(&[4.0, 4.0, 4.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(cv(&[1.0, 3.0]).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cv(&[1.0f32, 3.0]).unwrap(), 0.5, epsilon = 1e-6);
        assert!(cv(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage_ratio(265.0, 265.0).unwrap(), 1.0);
        assert_abs_diff_eq!(coverage_ratio(157.0, 265.0).unwrap(), 0.5925, epsilon = 1e-4);
        assert_eq!(coverage_ratio(0.0, 265.0).unwrap(), 0.0);
        assert!(coverage_ratio(1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn scr_parts_sum(pv in 1.0f64..1e4, a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            let total = a + b + c + 1e-9;
            let k = pv / total * 0.999;
            let s = scr(&agg(pv, a * k, b * k, c * k)).unwrap();
            prop_assert!((s.tot - (s.el + s.hp + s.storage)).abs() <= 1e-9);
            prop_assert!(s.tot <= 1.0 + 1e-9);
        }

        #[test]
        fn cv_is_scale_invariant(v in proptest::collection::vec(0.1f64..100.0, 2..20), k in 0.1f64..10.0) {
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            prop_assert!((cv(&v).unwrap() - cv(&scaled).unwrap()).abs() <= 1e-9);
        }
    }
}
