//! Capacity reduction: SOC duration curves, stored self-consumption against
//! capacity, CES_OPT and CES_DIR.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dispatch::{run_operator, run_prosumers, Community, DispatchParams, DispatchResult, ProsumerStage, StorageId};
use crate::{BesSpec, Error, Result, Topology};

/// Relative SOC of one storage sorted in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationCurve {
    pub source: StorageId,
    pub values: Vec<f64>,
}

pub fn soc_duration_curve(result: &DispatchResult, id: StorageId) -> Result<DurationCurve> {
    let (soc, cap) = result.soc(id)?;
    let mut values: Vec<f64> = if cap > 0.0 {
        soc.iter().map(|s| (s / cap).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; soc.len()]
    };
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(DurationCurve { source: id, values })
}

impl DurationCurve {
    /// Steps with relative SOC of at least `level`.
    pub fn steps_at_or_above(&self, level: f64) -> usize {
        self.values.partition_point(|&v| v >= level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionPoint {
    pub capacity_quotient: f64,
    pub sc_quotient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionCurve {
    pub topology: Topology,
    pub points: Vec<ReductionPoint>,
    pub ces_opt: Option<f64>,
    pub ces_dir: Option<f64>,
}

impl ReductionCurve {
    /// Largest drop of `sc_quotient` when capacity grows; 0 for a monotone curve.
    pub fn monotonicity_violation(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[0].sc_quotient - w[1].sc_quotient).max(0.0))
            .fold(0.0, f64::max)
    }
}

enum Source<'a> {
    /// Only the operator is re-dispatched: the prosumer stage of a CES does
    /// not depend on its size.
    Ces {
        stage: &'a ProsumerStage,
        spot: &'a [f64],
        full: BesSpec,
    },
    /// Every household battery is scaled and step one re-run.
    Hes { community: &'a Community },
}

/// Stored self-consumption as a function of the capacity fraction, with
/// memoised evaluations.
pub struct CapacitySweep<'a> {
    source: Source<'a>,
    params: DispatchParams,
    memo: Mutex<BTreeMap<u64, f64>>,
}

impl<'a> CapacitySweep<'a> {
    /// `full` is the CES at its initial size; power scales with capacity.
    pub fn ces(stage: &'a ProsumerStage, spot: &'a [f64], full: BesSpec, params: DispatchParams) -> Self {
        Self {
            source: Source::Ces { stage, spot, full },
            params,
            memo: Mutex::new(BTreeMap::new()),
        }
    }

    /// `community` carries the household batteries at their initial size.
    pub fn hes(community: &'a Community, params: DispatchParams) -> Self {
        Self {
            source: Source::Hes { community },
            params,
            memo: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn topology(&self) -> Topology {
        match self.source {
            Source::Ces { .. } => Topology::Ces,
            Source::Hes { .. } => Topology::Hes,
        }
    }

    /// Stored self-consumption (kWh) at `fraction` of the initial capacity.
    pub fn self_consumption(&self, fraction: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!("capacity fraction {fraction} outside [0, 1]")));
        }
        let key = (fraction * 1e9).round() as u64;
        if let Some(v) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(*v);
        }
        let sc = match &self.source {
            Source::Ces { stage, spot, full } => {
                let ces = (fraction > 0.0).then(|| full.scaled(fraction));
                let op = run_operator(stage, spot, ces.as_ref(), &self.params)?;
                (0..op.len()).map(|t| op.community_out(t)).sum()
            }
            Source::Hes { community } => {
                if fraction == 0.0 {
                    0.0
                } else {
                    let mut scaled = (*community).clone();
                    for h in &mut scaled.households {
                        h.devices.hes = h.devices.hes.map(|b| b.scaled(fraction));
                    }
                    let stage = run_prosumers(&scaled, Topology::Hes, &self.params)?;
                    stage.flows.iter().map(|f| f.pv_to_storage.iter().sum::<f64>()).sum()
                }
            }
        };
        self.memo.lock().expect("memo lock").insert(key, sc);
        Ok(sc)
    }

    pub fn sc_quotient(&self, fraction: f64) -> Result<f64> {
        let full = self.self_consumption(1.0)?;
        if full <= 0.0 {
            return Err(Error::Undefined("reduction quotient without stored self-consumption"));
        }
        Ok(self.self_consumption(fraction)? / full)
    }

    /// Every fraction evaluated so far, ascending.
    pub fn evaluated(&self) -> Result<Vec<ReductionPoint>> {
        let keys: Vec<u64> = self.memo.lock().expect("memo lock").keys().copied().collect();
        keys.into_iter()
            .map(|k| {
                let q = k as f64 * 1e-9;
                Ok(ReductionPoint {
                    capacity_quotient: q,
                    sc_quotient: self.sc_quotient(q)?,
                })
            })
            .collect()
    }
}

/// Curve over `fractions` (0 and 1 are always included).
pub fn sc_vs_capacity(sweep: &CapacitySweep<'_>, fractions: &[f64]) -> Result<ReductionCurve> {
    let mut fr: Vec<f64> = fractions.iter().copied().chain([0.0, 1.0]).collect();
    fr.sort_by(f64::total_cmp);
    fr.dedup();
    let points = fr
        .iter()
        .map(|&q| {
            Ok(ReductionPoint {
                capacity_quotient: q,
                sc_quotient: sweep.sc_quotient(q)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ces_dir = (sweep.topology() == Topology::Ces).then(|| points[0].sc_quotient);
    Ok(ReductionCurve {
        topology: sweep.topology(),
        points,
        ces_opt: None,
        ces_dir,
    })
}

/// Largest capacity reduction that keeps stored self-consumption within
/// `tolerance` of the full-size value, on a grid of `resolution`.
pub fn find_ces_opt(sweep: &CapacitySweep<'_>, tolerance: f64, resolution: f64) -> Result<f64> {
    if !(resolution > 0.0 && resolution <= 1.0) || !(0.0..1.0).contains(&tolerance) {
        return Err(Error::InvalidArgument("reduction tolerance/resolution out of range".into()));
    }
    let full = sweep.self_consumption(1.0)?;
    if full <= 0.0 {
        return Ok(0.0);
    }
    let target = (1.0 - tolerance) * full;
    let k_max = (1.0 / resolution).round() as u64;
    let at = |k: u64| (k as f64 * resolution).min(1.0);
    let ok = |k: u64| -> Result<bool> { Ok(sweep.self_consumption(at(k))? >= target) };
    if ok(0)? {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0u64, k_max);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(1.0 - at(hi))
}

/// Stored self-consumption reached at zero capacity by direct sharing alone.
pub fn ces_dir(sweep: &CapacitySweep<'_>) -> Result<f64> {
    if sweep.topology() != Topology::Ces {
        return Err(Error::InvalidArgument("CES_DIR needs the CES topology".into()));
    }
    sweep.sc_quotient(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::{Household, HouseholdDevices, HouseholdSeries};
    use crate::NgbSpec;

    /// Two households over `days` days; the second has its PV peak shifted
    /// into the other's evening deficit when `complementary`.
    fn community(days: usize, complementary: bool, surplus: f64) -> Community {
        let n = days * 96;
        let mk = |offset: usize| {
            let mut s = HouseholdSeries {
                fixed: vec![0.2; n],
                shiftable: vec![0.0; n],
                heat: vec![0.3; n],
                pv: vec![0.0; n],
            };
            for d in 0..days {
                for k in 40..56 {
                    s.pv[d * 96 + (k + offset) % 96] = 0.2 + surplus;
                }
            }
            Household {
                series: s,
                devices: HouseholdDevices {
                    ngb: Some(NgbSpec::default()),
                    ..Default::default()
                },
            }
        };
        Community {
            households: vec![mk(0), mk(if complementary { 30 } else { 0 })],
            spot: vec![0.03; n],
        }
    }

    fn params() -> DispatchParams {
        DispatchParams {
            arbitrage: false,
            ..Default::default()
        }
    }

    #[test]
    fn oversized_storage_halves() {
        // Daily surplus 2 · 16 · 0.1 = 3.2 kWh; 10 kWh is far more than needed.
        let c = community(3, false, 0.1);
        let stage = run_prosumers(&c, Topology::Ces, &params()).unwrap();
        let ces = BesSpec::new(10.0, 1.0).unwrap();
        let sweep = CapacitySweep::ces(&stage, &c.spot, ces, params());
        let opt = find_ces_opt(&sweep, 1e-4, 0.01).unwrap();
        assert!(opt >= 0.5, "{opt}");
        let curve = sc_vs_capacity(&sweep, &[0.25, 0.5, 0.75]).unwrap();
        assert!(curve.monotonicity_violation() <= 1e-6);
        assert_eq!(curve.ces_dir, Some(0.0));
    }

    #[test]
    fn saturated_storage_cannot_shrink() {
        let c = community(3, false, 0.5);
        let stage = run_prosumers(&c, Topology::Ces, &params()).unwrap();
        let ces = BesSpec::new(2.0, 1.0).unwrap();
        let sweep = CapacitySweep::ces(&stage, &c.spot, ces, params());
        let opt = find_ces_opt(&sweep, 1e-4, 0.01).unwrap();
        assert!(opt <= 0.02, "{opt}");
    }

    #[test]
    fn complementary_profiles_share_directly() {
        let c = community(2, true, 0.1);
        let stage = run_prosumers(&c, Topology::Ces, &params()).unwrap();
        let sweep = CapacitySweep::ces(&stage, &c.spot, BesSpec::new(4.0, 1.0).unwrap(), params());
        assert!(ces_dir(&sweep).unwrap() > 0.0);
    }

    #[test]
    fn hes_intercept_is_zero_and_duration_curve_sorted() {
        let mut c = community(2, false, 0.3);
        for h in &mut c.households {
            h.devices.hes = Some(BesSpec::new(2.0, 1.0).unwrap());
        }
        let sweep = CapacitySweep::hes(&c, params());
        let curve = sc_vs_capacity(&sweep, &[0.5]).unwrap();
        assert_eq!(curve.points[0].sc_quotient, 0.0);
        assert_eq!(curve.points.last().unwrap().sc_quotient, 1.0);
        assert!(curve.ces_dir.is_none());

        let r = crate::dispatch::rolling_run(&c, Topology::Hes, None, &params()).unwrap();
        let d = soc_duration_curve(&r, StorageId::Hes(0)).unwrap();
        assert!(d.values.windows(2).all(|w| w[0] >= w[1]));
        let max = r.households[0].soc.iter().cloned().fold(0.0, f64::max) / 2.0;
        assert!((d.values[0] - max).abs() < 1e-12);
        assert!(soc_duration_curve(&r, StorageId::Ces).is_err());
    }
}
