//! Annual rolling-horizon runs built from daily windows.

use rayon::prelude::*;

use super::operator::optimize_operator_window;
use super::prosumer::solve_household;
use super::{
    household_cost, CesState, Community, DispatchParams, DispatchResult, DrShiftPlan, HouseholdFlows,
    HouseholdWindow, OperatorFlows,
};
use crate::{BesSpec, Error, Result, Topology};

/// Step-one outcome for every household over the whole horizon.
///
/// In the CES topology this stage does not depend on the CES size, so one
/// stage serves every capacity of a sensitivity column.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsumerStage {
    pub topology: Topology,
    pub flows: Vec<HouseholdFlows>,
    pub dr_plans: Vec<DrShiftPlan>,
}

impl ProsumerStage {
    pub fn steps(&self) -> usize {
        self.flows.first().map_or(0, |f| f.len())
    }

    /// Pooled surplus `X[t]` and deficit `R[t]`.
    pub fn pooled(&self, range: std::ops::Range<usize>) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; range.len()];
        let mut r = vec![0.0; range.len()];
        for f in &self.flows {
            for (i, t) in range.clone().enumerate() {
                x[i] += f.pv_to_grid[t];
                r[i] += f.grid_purchase(t);
            }
        }
        (x, r)
    }
}

fn windows(n: usize, w: usize) -> impl Iterator<Item = (usize, std::ops::Range<usize>)> {
    (0..n).step_by(w).enumerate().map(move |(i, s)| (i, s..(s + w).min(n)))
}

/// Runs step one for all households window by window. In the HES topology
/// each household's battery state is carried from one window to the next.
pub fn run_prosumers(community: &Community, topology: Topology, params: &DispatchParams) -> Result<ProsumerStage> {
    community.validate()?;
    params.validate()?;
    let n = community.steps();
    let w = params.window_steps;
    let per_household: Vec<Result<(HouseholdFlows, DrShiftPlan)>> = community
        .households
        .par_iter()
        .map(|hh| {
            let mut flows = HouseholdFlows::with_capacity(n);
            let mut plan = DrShiftPlan::default();
            let mut soc = 0.0;
            for (i, range) in windows(n, w) {
                let start = range.start;
                let win = HouseholdWindow {
                    series: hh.series.slice(range),
                    devices: hh.devices,
                    soc0: soc,
                };
                let out = solve_household(&win, topology, params).map_err(|e| e.in_window(i))?;
                soc = out.soc_end;
                flows.append(&out.flows);
                plan.shifts.extend(out.dr_plan.offset(start).shifts);
            }
            Ok((flows, plan))
        })
        .collect();
    let mut stage = ProsumerStage {
        topology,
        flows: Vec::with_capacity(per_household.len()),
        dr_plans: Vec::with_capacity(per_household.len()),
    };
    for r in per_household {
        let (f, p) = r?;
        stage.flows.push(f);
        stage.dr_plans.push(p);
    }
    Ok(stage)
}

/// Runs step two on the pooled residuals of `stage`.
pub fn run_operator(stage: &ProsumerStage, spot: &[f64], ces: Option<&BesSpec>, params: &DispatchParams) -> Result<OperatorFlows> {
    let n = stage.steps();
    if spot.len() != n {
        return Err(Error::Series("spot series length differs from the stage".into()));
    }
    let mut flows = OperatorFlows {
        direct_share: Vec::with_capacity(n),
        community_charge: Vec::with_capacity(n),
        community_discharge: Vec::with_capacity(n),
        spot_buy_to_ces: Vec::with_capacity(n),
        ces_to_spot: Vec::with_capacity(n),
        soc_community: Vec::with_capacity(n),
        soc_operator: Vec::with_capacity(n),
    };
    let mut state = CesState::default();
    for (i, range) in windows(n, params.window_steps) {
        let (x, r) = stage.pooled(range.clone());
        let out = optimize_operator_window(&x, &r, &spot[range], ces, state, params).map_err(|e| e.in_window(i))?;
        state = out.state_end;
        flows.append(&out.flows);
    }
    Ok(flows)
}

/// Attributes pooled community flows to households: outflow in proportion to
/// each member's surplus, inflow in proportion to each member's deficit
/// (served against household load before heat pump demand).
pub fn allocate_community(stage: &ProsumerStage, op: &OperatorFlows) -> Vec<HouseholdFlows> {
    let n = stage.steps();
    let mut out: Vec<HouseholdFlows> = stage.flows.clone();
    for t in 0..n {
        let (x, r): (f64, f64) = stage
            .flows
            .iter()
            .fold((0.0, 0.0), |(x, r), f| (x + f.pv_to_grid[t], r + f.grid_purchase(t)));
        let c_out = op.community_out(t);
        let c_in = op.community_in(t);
        for (f, base) in out.iter_mut().zip(&stage.flows) {
            if c_out > 0.0 && x > 0.0 {
                let share = c_out * base.pv_to_grid[t] / x;
                f.pv_to_storage[t] += share;
                f.pv_to_grid[t] = (base.pv_to_grid[t] - share).max(0.0);
            }
            if c_in > 0.0 && r > 0.0 {
                let share = c_in * base.grid_purchase(t) / r;
                let to_load = share.min(base.grid_to_load[t]);
                let to_hp = (share - to_load).min(base.grid_to_hp[t]);
                f.storage_to_load[t] += to_load;
                f.storage_to_hp[t] += to_hp;
                f.grid_to_load[t] = (base.grid_to_load[t] - to_load).max(0.0);
                f.grid_to_hp[t] = (base.grid_to_hp[t] - to_hp).max(0.0);
            }
        }
    }
    out
}

/// Turns a step-one stage into a finished run. For the CES topology `ces`
/// and `params.sharing` decide what the operator can do; `None` with sharing
/// disabled is the no-storage baseline.
pub fn assemble(stage: &ProsumerStage, community: &Community, ces: Option<&BesSpec>, params: &DispatchParams) -> Result<DispatchResult> {
    let topology = stage.topology;
    let (households, operator, arbitrage_profit) = match topology {
        Topology::Hes => (stage.flows.clone(), None, 0.0),
        Topology::Ces => {
            let op = run_operator(stage, &community.spot, ces, params)?;
            let arb = op.arbitrage_profit(&community.spot);
            (allocate_community(stage, &op), Some(op), arb)
        }
    };
    let ces_member = topology == Topology::Ces;
    let eu_cost = households
        .iter()
        .zip(&community.households)
        .map(|(f, h)| household_cost(f, &h.devices, params, ces_member))
        .collect();
    let op_profit = if ces_member {
        let sold: f64 = households.iter().map(|f| (0..f.len()).map(|t| f.grid_purchase(t)).sum::<f64>()).sum();
        params.tariff.retail_components.sales_margin * sold + arbitrage_profit
    } else {
        0.0
    };
    let hes_capacity = community
        .households
        .iter()
        .map(|h| match topology {
            Topology::Hes => h.devices.hes.map_or(0.0, |b| b.capacity),
            Topology::Ces => 0.0,
        })
        .collect();
    Ok(DispatchResult {
        topology,
        households,
        operator,
        ces_capacity: ces.map_or(0.0, |c| c.capacity),
        hes_capacity,
        eu_cost,
        op_profit,
        arbitrage_profit,
        dr_plans: stage.dr_plans.clone(),
    })
}

/// Full two-step annual run: 35,040 steps as consecutive daily windows.
pub fn rolling_run(community: &Community, topology: Topology, ces: Option<&BesSpec>, params: &DispatchParams) -> Result<DispatchResult> {
    if topology == Topology::Hes && ces.is_some_and(|c| c.capacity > 0.0) {
        return Err(Error::InvalidArgument("HES topology cannot have a CES".into()));
    }
    let stage = run_prosumers(community, topology, params)?;
    assemble(&stage, community, ces, params)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::super::{check_invariants, Household, HouseholdDevices, HouseholdSeries};
    use super::*;
    use crate::{NgbSpec, STEPS_PER_DAY};

    fn day_profile(pv_peak: f64, days: usize) -> HouseholdSeries {
        let n = days * STEPS_PER_DAY;
        let mut s = HouseholdSeries {
            fixed: vec![0.0; n],
            shiftable: vec![0.0; n],
            heat: vec![0.0; n],
            pv: vec![0.0; n],
        };
        for t in 0..n {
            let h = (t % STEPS_PER_DAY) as f64 / 4.0;
            let load = 0.1 + 0.15 * (-(h - 19.0) * (h - 19.0) / 4.0).exp();
            s.fixed[t] = 0.6 * load;
            s.shiftable[t] = 0.4 * load;
            s.heat[t] = 0.5;
            s.pv[t] = if (7.0..19.0).contains(&h) { pv_peak * ((h - 7.0) / 12.0 * std::f64::consts::PI).sin() } else { 0.0 };
        }
        s
    }

    fn community(days: usize, hes: Option<BesSpec>, dr: usize) -> Community {
        let households = [0.6, 0.0, 1.0]
            .iter()
            .map(|&peak| Household {
                series: day_profile(peak, days),
                devices: HouseholdDevices {
                    hp: None,
                    ngb: Some(NgbSpec::default()),
                    hes,
                    dr_window_steps: dr,
                },
            })
            .collect();
        let n = days * STEPS_PER_DAY;
        Community {
            households,
            spot: (0..n).map(|t| 0.03 + 0.02 * ((t as f64) / 9.0).sin()).collect(),
        }
    }

    #[test]
    fn no_pv_no_storage_costs_retail_plus_gas() {
        let mut c = community(2, None, 0);
        for h in &mut c.households {
            h.series.pv.iter_mut().for_each(|v| *v = 0.0);
        }
        let p = DispatchParams::default();
        let r = rolling_run(&c, Topology::Hes, None, &p).unwrap();
        let h = &c.households[0];
        let load: f64 = (0..h.series.len()).map(|t| h.series.load(t)).sum();
        let heat: f64 = h.series.heat.iter().sum();
        let expected = p.retail() * load + p.tariff.gas_price() / 0.95 * heat;
        assert_abs_diff_eq!(r.eu_cost[0], expected, epsilon = 1e-9);
    }

    #[test]
    fn periodic_inputs_give_periodic_dispatch() {
        let c = community(4, Some(BesSpec::new(3.0, 1.0).unwrap()), 16);
        let p = DispatchParams::default();
        let r = rolling_run(&c, Topology::Hes, None, &p).unwrap();
        check_invariants(&r, &c, &p, None).unwrap();
        let f = &r.households[2];
        // Day 2 onward starts from the same carried SOC, so flows repeat.
        for t in 0..STEPS_PER_DAY {
            let a = f.grid_to_load[STEPS_PER_DAY * 2 + t];
            let b = f.grid_to_load[STEPS_PER_DAY * 3 + t];
            assert_abs_diff_eq!(a, b, epsilon = 1e-5);
        }
    }

    #[test]
    fn ces_run_satisfies_invariants_and_pools() {
        let ces = BesSpec::new(9.0, 1.0).unwrap();
        let c = community(3, None, 16);
        let p = DispatchParams::default();
        let r = rolling_run(&c, Topology::Ces, Some(&ces), &p).unwrap();
        check_invariants(&r, &c, &p, Some(&ces)).unwrap();

        let hes = community(3, Some(BesSpec::new(3.0, 1.0).unwrap()), 16);
        let rh = rolling_run(&hes, Topology::Hes, None, &p).unwrap();
        check_invariants(&rh, &hes, &p, None).unwrap();
        assert!(r.storage_self_consumption() >= rh.storage_self_consumption() - 1e-6);
    }
}
