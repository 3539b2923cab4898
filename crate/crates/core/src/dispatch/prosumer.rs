//! Step one: cost-minimal dispatch of a single household on its own devices.

use super::dr::{DrShiftPlan, DrVars};
use super::lp::{Lp, LpSolution, Var};
use super::{household_cost, DispatchParams, HouseholdFlows, HouseholdWindow, WindowProblem};
use crate::{Error, Result, Topology};

/// Outcome of one household window.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsumerWindow {
    pub flows: HouseholdFlows,
    pub dr_plan: DrShiftPlan,
    /// Cash cost of the window, €.
    pub cost: f64,
    /// Cash cost minus the credited value of energy left in the HES.
    pub objective: f64,
    /// Leftover PV surplus `X_h` (candidate for community use).
    pub surplus: Vec<f64>,
    /// Residual grid demand `R_h`.
    pub deficit: Vec<f64>,
    pub soc_end: f64,
}

/// Optimises household `h` of `p`. The household battery takes part only in
/// the HES topology.
pub fn optimize_prosumer_window(p: &WindowProblem, h: usize) -> Result<ProsumerWindow> {
    p.validate()?;
    let hw = p
        .households
        .get(h)
        .ok_or_else(|| Error::InvalidArgument(format!("household index {h} out of range")))?;
    solve_household(hw, p.topology, &p.params)
}

pub(crate) fn solve_household(hw: &HouseholdWindow, topology: Topology, params: &DispatchParams) -> Result<ProsumerWindow> {
    let s = &hw.series;
    let n = s.len();
    check_heat_coverage(hw)?;
    let battery = match topology {
        Topology::Hes => hw.devices.hes.filter(|b| b.capacity > 0.0),
        Topology::Ces => None,
    };
    let has_pv = s.pv.iter().any(|&v| v > 0.0);
    let storage_active = battery.is_some() && (has_pv || hw.soc0 > 0.0);
    let dr_active = hw.devices.dr_window_steps > 0 && has_pv && s.shiftable.iter().any(|&v| v > 0.0);

    let mut window = if !storage_active && !dr_active {
        greedy(hw, params)?
    } else {
        let mut built = build_lp(hw, params, battery.is_some(), dr_active, false);
        let sol = built.lp_solve()?;
        let mut w = built.extract(&sol, hw);
        if built.simultaneous(&sol, params.exclusivity_tol) {
            log::debug!("simultaneous charge/discharge in household window, re-solving as MILP");
            let mut milp = build_lp(hw, params, true, dr_active, true);
            let sol = milp.lp_solve()?;
            w = milp.extract(&sol, hw);
        }
        w
    };
    if battery.is_some() && window.flows.soc.is_empty() {
        // Idle battery: only self-discharge acts on the carried state.
        let ret = battery.map_or(1.0, |b| b.retention());
        let mut soc = hw.soc0;
        window.flows.soc = (0..n)
            .map(|_| {
                soc *= ret;
                soc
            })
            .collect();
        window.soc_end = soc;
    }
    let retail = params.retail();
    let eta_d = battery.map_or(1.0, |b| b.eff_discharge);
    window.cost = household_cost(&window.flows, &hw.devices, params, false);
    window.objective = window.cost - params.terminal_value_factor * eta_d * retail * window.soc_end;
    Ok(window)
}

fn check_heat_coverage(hw: &HouseholdWindow) -> Result<()> {
    let cap = hw.devices.hp.map_or(0.0, |h| h.step_cap()) + hw.devices.ngb.map_or(0.0, |n| n.step_cap());
    if let Some((t, q)) = hw.series.heat.iter().enumerate().find(|(_, &q)| q > cap + 1e-9) {
        return Err(Error::Infeasible {
            window: 0,
            message: format!("heat demand {q} kWh_th at step {t} exceeds heat pump and boiler capacity {cap}"),
        });
    }
    Ok(())
}

/// Closed form without intertemporal coupling: PV serves the load first, heat
/// is covered in merit order (surplus PV into the heat pump, boiler, grid
/// into the heat pump), the rest is exported.
fn greedy(hw: &HouseholdWindow, params: &DispatchParams) -> Result<ProsumerWindow> {
    let s = &hw.series;
    let n = s.len();
    let tariff = &params.tariff;
    let retail = params.retail();
    let mut f = HouseholdFlows::zeros(n);
    let (hp_cap, cop) = hw.devices.hp.map_or((0.0, 1.0), |h| (h.step_cap(), h.cop));
    let (ngb_cap, ngb_cost) = hw
        .devices
        .ngb
        .map_or((0.0, f64::INFINITY), |b| (b.step_cap(), tariff.gas_price() / b.efficiency));

    #[derive(Clone, Copy, PartialEq)]
    enum Source {
        HpPv,
        Ngb,
        HpGrid,
    }
    let mut order = [
        (Source::HpPv, tariff.feed_in / cop),
        (Source::Ngb, ngb_cost),
        (Source::HpGrid, retail / cop),
    ];
    order.sort_by(|a, b| a.1.total_cmp(&b.1));

    for t in 0..n {
        let load = s.load(t);
        let pl = s.pv[t].min(load);
        let mut spare_pv = s.pv[t] - pl;
        f.pv_to_load[t] = pl;
        f.grid_to_load[t] = load - pl;

        let mut heat = s.heat[t];
        let mut hp_room = if hw.devices.hp.is_some() { hp_cap } else { 0.0 };
        let mut ngb_room = if hw.devices.ngb.is_some() { ngb_cap } else { 0.0 };
        for (src, _) in order {
            if heat <= 0.0 {
                break;
            }
            let q = match src {
                Source::HpPv => heat.min(hp_room).min(spare_pv * cop),
                Source::Ngb => heat.min(ngb_room),
                Source::HpGrid => heat.min(hp_room),
            };
            if q <= 0.0 {
                continue;
            }
            match src {
                Source::HpPv => {
                    f.pv_to_hp[t] += q / cop;
                    spare_pv = (spare_pv - q / cop).max(0.0);
                    hp_room -= q;
                    f.hp_heat[t] += q;
                }
                Source::Ngb => {
                    ngb_room -= q;
                    f.ngb_heat[t] += q;
                }
                Source::HpGrid => {
                    f.grid_to_hp[t] += q / cop;
                    hp_room -= q;
                    f.hp_heat[t] += q;
                }
            }
            heat -= q;
        }
        if heat > 1e-9 {
            return Err(Error::Infeasible {
                window: 0,
                message: format!("heat demand at step {t} cannot be covered"),
            });
        }
        f.pv_to_grid[t] = spare_pv;
    }
    Ok(finish(f, DrShiftPlan::default(), hw.soc0))
}

fn finish(flows: HouseholdFlows, dr_plan: DrShiftPlan, soc0: f64) -> ProsumerWindow {
    let n = flows.len();
    let surplus = flows.pv_to_grid.clone();
    let deficit = (0..n).map(|t| flows.grid_purchase(t)).collect();
    let soc_end = flows.soc.last().copied().unwrap_or(soc0);
    ProsumerWindow {
        flows,
        dr_plan,
        cost: 0.0,
        objective: 0.0,
        surplus,
        deficit,
        soc_end,
    }
}

struct Storage {
    charge: Vec<Var>,
    to_load: Vec<Var>,
    to_hp: Vec<Option<Var>>,
    soc: Vec<Var>,
}

struct Built {
    lp: Option<Lp>,
    pv_to_load: Vec<Var>,
    pv_to_grid: Vec<Var>,
    grid_to_load: Vec<Var>,
    pv_to_hp: Vec<Option<Var>>,
    grid_to_hp: Vec<Option<Var>>,
    hp_heat: Vec<Option<Var>>,
    ngb_heat: Vec<Option<Var>>,
    storage: Option<Storage>,
    dr: Option<DrVars>,
}

fn build_lp(hw: &HouseholdWindow, params: &DispatchParams, with_storage: bool, with_dr: bool, integer: bool) -> Built {
    let s = &hw.series;
    let n = s.len();
    let d = &hw.devices;
    let tariff = &params.tariff;
    let retail = params.retail();
    let eps = params.throughput_penalty;
    let inf = f64::INFINITY;
    let mut lp = Lp::new();

    let hp = d.hp;
    let battery = if with_storage { d.hes.filter(|b| b.capacity > 0.0) } else { None };
    let mut b = Built {
        lp: None,
        pv_to_load: Vec::with_capacity(n),
        pv_to_grid: Vec::with_capacity(n),
        grid_to_load: Vec::with_capacity(n),
        pv_to_hp: Vec::with_capacity(n),
        grid_to_hp: Vec::with_capacity(n),
        hp_heat: Vec::with_capacity(n),
        ngb_heat: Vec::with_capacity(n),
        storage: battery.map(|_| Storage {
            charge: Vec::with_capacity(n),
            to_load: Vec::with_capacity(n),
            to_hp: Vec::with_capacity(n),
            soc: Vec::with_capacity(n),
        }),
        dr: None,
    };

    for t in 0..n {
        b.pv_to_load.push(lp.var(0.0, 0.0, s.pv[t]));
        b.pv_to_grid.push(lp.var(-tariff.feed_in, 0.0, s.pv[t]));
        b.grid_to_load.push(lp.var(retail, 0.0, inf));
        let hp_vars = hp.map(|h| {
            (
                lp.var(0.0, 0.0, s.pv[t]),
                lp.var(retail, 0.0, inf),
                lp.var(0.0, 0.0, h.step_cap().min(s.heat[t])),
            )
        });
        b.pv_to_hp.push(hp_vars.map(|v| v.0));
        b.grid_to_hp.push(hp_vars.map(|v| v.1));
        b.hp_heat.push(hp_vars.map(|v| v.2));
        b.ngb_heat.push(
            d.ngb
                .map(|g| lp.var(tariff.gas_price() / g.efficiency, 0.0, g.step_cap().min(s.heat[t]))),
        );
        if let (Some(st), Some(bat)) = (b.storage.as_mut(), battery) {
            let limit = bat.step_power_limit();
            let last = t + 1 == n;
            let terminal = if last {
                -params.terminal_value_factor * bat.eff_discharge * retail
            } else {
                0.0
            };
            st.charge.push(lp.var(eps, 0.0, limit.min(s.pv[t])));
            st.to_load.push(lp.var(eps, 0.0, limit));
            st.to_hp.push(hp.map(|_| lp.var(eps, 0.0, limit)));
            st.soc.push(lp.var(terminal, 0.0, bat.capacity));
        }
    }

    if with_dr {
        b.dr = Some(DrVars::build(&mut lp, &s.shiftable, d.dr_window_steps, params.dr_direction, eps));
    }

    for t in 0..n {
        // PV split
        let mut row = vec![(b.pv_to_load[t], 1.0), (b.pv_to_grid[t], 1.0)];
        if let Some(v) = b.pv_to_hp[t] {
            row.push((v, 1.0));
        }
        if let Some(st) = &b.storage {
            row.push((st.charge[t], 1.0));
        }
        lp.eq(s.pv[t], &row);

        // electrical load
        let mut row = vec![(b.pv_to_load[t], 1.0), (b.grid_to_load[t], 1.0)];
        if let Some(st) = &b.storage {
            row.push((st.to_load[t], 1.0));
        }
        if let Some(dr) = &b.dr {
            row.extend(dr.balance_terms(t));
        }
        lp.eq(s.load(t), &row);

        // heat
        let mut row = Vec::new();
        if let Some(q) = b.hp_heat[t] {
            row.push((q, 1.0));
        }
        if let Some(q) = b.ngb_heat[t] {
            row.push((q, 1.0));
        }
        if !row.is_empty() {
            lp.eq(s.heat[t], &row);
        }

        // heat pump electricity
        if let (Some(h), Some(q)) = (hp, b.hp_heat[t]) {
            let mut row = vec![(q, -1.0 / h.cop)];
            row.push((b.pv_to_hp[t].expect("hp var"), 1.0));
            row.push((b.grid_to_hp[t].expect("hp var"), 1.0));
            if let Some(st) = &b.storage {
                row.push((st.to_hp[t].expect("hp var"), 1.0));
            }
            lp.eq(0.0, &row);
        }

        if let (Some(st), Some(bat)) = (&b.storage, battery) {
            let mut row = vec![
                (st.soc[t], 1.0),
                (st.charge[t], -bat.eff_charge),
                (st.to_load[t], 1.0 / bat.eff_discharge),
            ];
            if let Some(v) = st.to_hp[t] {
                row.push((v, 1.0 / bat.eff_discharge));
            }
            let rhs = if t == 0 {
                hw.soc0 * bat.retention()
            } else {
                row.push((st.soc[t - 1], -bat.retention()));
                0.0
            };
            lp.eq(rhs, &row);

            let limit = bat.step_power_limit();
            let mut out = vec![(st.to_load[t], 1.0)];
            if let Some(v) = st.to_hp[t] {
                out.push((v, 1.0));
            }
            if integer {
                let z = lp.binary(0.0);
                lp.le(0.0, &[(st.charge[t], 1.0), (z, -limit)]);
                out.push((z, limit));
                lp.le(limit, &out);
            } else if out.len() > 1 {
                lp.le(limit, &out);
            }
        }
    }
    b.lp = Some(lp);
    b
}

impl Built {
    fn lp_solve(&mut self) -> Result<LpSolution> {
        self.lp.take().expect("problem solved twice").minimise()
    }

    fn simultaneous(&self, sol: &LpSolution, tol: f64) -> bool {
        let Some(st) = &self.storage else { return false };
        (0..st.charge.len()).any(|t| {
            let c = sol.get(st.charge[t]);
            let d = sol.get(st.to_load[t]) + st.to_hp[t].map_or(0.0, |v| sol.get(v));
            c > tol && d > tol
        })
    }

    fn extract(&self, sol: &LpSolution, hw: &HouseholdWindow) -> ProsumerWindow {
        let n = self.pv_to_load.len();
        let clean = |v: f64| if v.abs() < 1e-10 { 0.0 } else { v };
        let get = |v: Var| clean(sol.get(v));
        let opt = |v: &Option<Var>| v.map_or(0.0, |x| clean(sol.get(x)));
        let mut f = HouseholdFlows::zeros(n);
        for t in 0..n {
            f.pv_to_load[t] = get(self.pv_to_load[t]);
            f.pv_to_grid[t] = get(self.pv_to_grid[t]);
            f.grid_to_load[t] = get(self.grid_to_load[t]);
            f.pv_to_hp[t] = opt(&self.pv_to_hp[t]);
            f.grid_to_hp[t] = opt(&self.grid_to_hp[t]);
            f.hp_heat[t] = opt(&self.hp_heat[t]);
            f.ngb_heat[t] = opt(&self.ngb_heat[t]);
            if let Some(st) = &self.storage {
                f.pv_to_storage[t] = get(st.charge[t]);
                f.storage_to_load[t] = get(st.to_load[t]);
                f.storage_to_hp[t] = opt(&st.to_hp[t]);
            }
        }
        if let Some(st) = &self.storage {
            f.soc = st.soc.iter().map(|&v| clean(sol.get(v)).max(0.0)).collect();
        }
        let plan = match &self.dr {
            Some(dr) => {
                let (out, inn, plan) = dr.extract(sol);
                f.dr_out = out;
                f.dr_in = inn;
                plan
            }
            None => DrShiftPlan::default(),
        };
        finish(f, plan, hw.soc0)
    }
}
