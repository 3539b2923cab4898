//! Step two: the utility dispatches the pooled CES.
//!
//! Pass one maximises community self-consumption volume (direct sharing plus
//! CES discharge to members). Pass two keeps that volume and maximises spot
//! arbitrage with the remaining headroom. The stored energy is split into a
//! community account and an operator account that share capacity and power.
//! Operator stock carried in from an earlier window may be sold in pass one
//! when the community needs the room.

use highs::Sense;

use super::lp::{Lp, LpModel, LpSolution, Var};
use super::{CesState, DispatchParams, OperatorFlows};
use crate::{BesSpec, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorWindow {
    pub flows: OperatorFlows,
    /// Pass-one value: shared volume plus credited end-of-window stock, kWh.
    pub community_volume: f64,
    /// Σ spot·(sell − buy), €.
    pub arbitrage_profit: f64,
    pub state_end: CesState,
}

/// Dispatches the CES for one window given pooled surplus `x` and deficit `r`.
pub fn optimize_operator_window(
    x: &[f64],
    r: &[f64],
    spot: &[f64],
    ces: Option<&BesSpec>,
    state: CesState,
    params: &DispatchParams,
) -> Result<OperatorWindow> {
    let n = spot.len();
    if x.len() != n || r.len() != n {
        return Err(Error::InvalidArgument("residual and spot slices differ in length".into()));
    }
    if x.iter().chain(r).any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidArgument("residuals must be >= 0".into()));
    }
    let spec = ces.filter(|c| c.capacity > 0.0);
    let Some(spec) = spec else {
        return Ok(share_only(x, r, params));
    };
    let has_community = x.iter().any(|&v| v > 0.0) && r.iter().any(|&v| v > 0.0)
        || (state.community > 0.0 && r.iter().any(|&v| v > 0.0));
    if !has_community && !params.arbitrage && state.operator == 0.0 {
        // Nothing can move: at most self-discharge of the community stock.
        let mut w = share_only(x, r, params);
        let ret = spec.retention();
        let (mut c, mut o) = (state.community, state.operator);
        for t in 0..n {
            c *= ret;
            o *= ret;
            w.flows.soc_community[t] = c;
            w.flows.soc_operator[t] = o;
        }
        w.community_volume = w.flows.direct_share.iter().sum::<f64>()
            + params.terminal_value_factor * spec.eff_discharge * c;
        w.state_end = CesState { community: c, operator: o };
        return Ok(w);
    }

    // Overlapping charge and discharge is resolved per step. When the
    // community account moves, the operator yields: its opposite trade is
    // barred. Overlap inside one account gets a direction binary. Rules
    // only tighten, so the loop ends.
    let mut rule = vec![StepRule::Free; n];
    let mut w = solve_passes(x, r, spot, spec, state, params, &rule)?;
    loop {
        let tol = params.exclusivity_tol;
        let f = &w.flows;
        let mut changed = false;
        for t in w.simultaneous_steps(tol) {
            let next = if f.community_charge[t] > tol && f.community_discharge[t] <= tol && rule[t] == StepRule::Free {
                StepRule::OperatorNoSell
            } else if f.community_discharge[t] > tol && f.community_charge[t] <= tol && rule[t] == StepRule::Free {
                StepRule::OperatorNoBuy
            } else {
                StepRule::Binary
            };
            if next != rule[t] {
                rule[t] = next;
                changed = true;
            }
        }
        if !changed {
            return match w.simultaneous_steps(tol).first() {
                Some(&t) => Err(Error::SimultaneousChargeDischarge {
                    charge: f.charge(t),
                    discharge: f.discharge(t),
                }),
                None => Ok(w),
            };
        }
        log::debug!("simultaneous CES charge/discharge, re-solving with step rules");
        w = solve_passes(x, r, spot, spec, state, params, &rule)?;
    }
}

/// How one step keeps charge and discharge apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StepRule {
    Free,
    /// The operator may not buy while the community discharges.
    OperatorNoBuy,
    /// The operator may not sell while the community charges.
    OperatorNoSell,
    Binary,
}

fn share_only(x: &[f64], r: &[f64], params: &DispatchParams) -> OperatorWindow {
    let n = x.len();
    let mut flows = OperatorFlows::zeros(n);
    if params.sharing {
        for t in 0..n {
            flows.direct_share[t] = x[t].min(r[t]);
        }
    }
    OperatorWindow {
        community_volume: flows.direct_share.iter().sum(),
        flows,
        arbitrage_profit: 0.0,
        state_end: CesState::default(),
    }
}

struct Vars {
    share: Vec<Var>,
    cx: Vec<Var>,
    dr: Vec<Var>,
    cb: Vec<Var>,
    ds: Vec<Var>,
    sc: Vec<Var>,
    so: Vec<Var>,
}

impl OperatorWindow {
    fn simultaneous_steps(&self, tol: f64) -> Vec<usize> {
        let f = &self.flows;
        (0..f.len()).filter(|&t| f.charge(t) > tol && f.discharge(t) > tol).collect()
    }
}

fn build(x: &[f64], r: &[f64], spec: &BesSpec, state: CesState, params: &DispatchParams, rule: &[StepRule]) -> (Lp, Vars) {
    let n = x.len();
    let eps = params.throughput_penalty;
    let p = spec.step_power_limit();
    let cap = spec.capacity;
    let ret = spec.retention();
    let kappa = params.terminal_value_factor * spec.eff_discharge;
    let mut lp = Lp::new();
    let mut v = Vars {
        share: Vec::with_capacity(n),
        cx: Vec::with_capacity(n),
        dr: Vec::with_capacity(n),
        cb: Vec::with_capacity(n),
        ds: Vec::with_capacity(n),
        sc: Vec::with_capacity(n),
        so: Vec::with_capacity(n),
    };
    // Pass-one costs (minimisation of negative volume); the operator may not
    // buy, and sells only to clear carried stock.
    let evict = if state.operator > 0.0 { p } else { 0.0 };
    for t in 0..n {
        let share_hi = if params.sharing { x[t].min(r[t]) } else { 0.0 };
        v.share.push(lp.var(-1.0, 0.0, share_hi));
        v.cx.push(lp.var(eps, 0.0, x[t].min(p)));
        v.dr.push(lp.var(-1.0 + eps, 0.0, r[t].min(p)));
        v.cb.push(lp.var(eps, 0.0, 0.0));
        let sell = if rule[t] == StepRule::OperatorNoSell { 0.0 } else { evict };
        v.ds.push(lp.var(eps, 0.0, sell));
        let terminal = if t + 1 == n { -kappa } else { 0.0 };
        v.sc.push(lp.var(terminal, 0.0, cap));
        v.so.push(lp.var(0.0, 0.0, cap));
    }
    for t in 0..n {
        lp.le(x[t], &[(v.share[t], 1.0), (v.cx[t], 1.0)]);
        lp.le(r[t], &[(v.share[t], 1.0), (v.dr[t], 1.0)]);
        for (soc, charge, discharge, s0) in [
            (&v.sc, &v.cx, &v.dr, state.community),
            (&v.so, &v.cb, &v.ds, state.operator),
        ] {
            let mut row = vec![
                (soc[t], 1.0),
                (charge[t], -spec.eff_charge),
                (discharge[t], 1.0 / spec.eff_discharge),
            ];
            let rhs = if t == 0 {
                s0 * ret
            } else {
                row.push((soc[t - 1], -ret));
                0.0
            };
            lp.eq(rhs, &row);
        }
        lp.le(cap, &[(v.sc[t], 1.0), (v.so[t], 1.0)]);
        if rule[t] == StepRule::Binary {
            let z = lp.binary(0.0);
            lp.le(0.0, &[(v.cx[t], 1.0), (v.cb[t], 1.0), (z, -p)]);
            lp.le(p, &[(v.dr[t], 1.0), (v.ds[t], 1.0), (z, p)]);
        } else {
            lp.le(p, &[(v.cx[t], 1.0), (v.cb[t], 1.0)]);
            lp.le(p, &[(v.dr[t], 1.0), (v.ds[t], 1.0)]);
        }
    }
    (lp, v)
}

fn solve_passes(
    x: &[f64],
    r: &[f64],
    spot: &[f64],
    spec: &BesSpec,
    state: CesState,
    params: &DispatchParams,
    rule: &[StepRule],
) -> Result<OperatorWindow> {
    let n = x.len();
    let kappa = params.terminal_value_factor * spec.eff_discharge;
    let (lp, v) = build(x, r, spec, state, params, rule);
    let model = lp.into_model(Sense::Minimise);
    let (sol1, mut model) = model.solve()?;
    let volume = |s: &LpSolution| -> f64 {
        (0..n).map(|t| s.get(v.share[t]) + s.get(v.dr[t])).sum::<f64>() + kappa * s.get(v.sc[n - 1])
    };
    let v1 = volume(&sol1);

    let sol = if params.arbitrage {
        pass_two(&mut model, &v, spot, spec, params, rule, v1);
        let (sol2, _) = model.solve().map_err(|e| match e {
            Error::Infeasible { window, message } => Error::Infeasible {
                window,
                message: format!("holding community volume {v1} kWh: {message}"),
            },
            other => other,
        })?;
        sol2
    } else {
        sol1
    };
    Ok(extract(&sol, &v, spot, volume(&sol)))
}

fn pass_two(model: &mut LpModel, v: &Vars, spot: &[f64], spec: &BesSpec, params: &DispatchParams, rule: &[StepRule], v1: f64) {
    let n = spot.len();
    let eps = params.throughput_penalty;
    let p = spec.step_power_limit();
    let kappa = params.terminal_value_factor * spec.eff_discharge;
    let mean_spot = (spot.iter().sum::<f64>() / n as f64).max(0.0);
    let mut keep = Vec::with_capacity(2 * n + 1);
    for t in 0..n {
        model.set_cost(v.share[t], 0.0);
        model.set_cost(v.dr[t], eps);
        model.set_cost(v.cx[t], eps);
        let buy = if rule[t] == StepRule::OperatorNoBuy { 0.0 } else { p };
        let sell = if rule[t] == StepRule::OperatorNoSell { 0.0 } else { p };
        model.set_bounds(v.cb[t], 0.0, buy);
        model.set_bounds(v.ds[t], 0.0, sell);
        model.set_cost(v.cb[t], spot[t] + eps);
        model.set_cost(v.ds[t], -spot[t] + eps);
        keep.push((v.share[t], 1.0));
        keep.push((v.dr[t], 1.0));
    }
    model.set_cost(v.sc[n - 1], 0.0);
    model.set_cost(v.so[n - 1], -kappa * mean_spot);
    keep.push((v.sc[n - 1], kappa));
    let slack = 1e-7 * v1.abs().max(1.0);
    model.add_ge(v1 - slack, &keep);
    model.set_sense(Sense::Minimise);
}

fn extract(sol: &LpSolution, v: &Vars, spot: &[f64], community_volume: f64) -> OperatorWindow {
    let clean = |x: f64| if x.abs() < 1e-10 { 0.0 } else { x.max(0.0) };
    let all = |vars: &[Var]| -> Vec<f64> { vars.iter().map(|&x| clean(sol.get(x))).collect() };
    let flows = OperatorFlows {
        direct_share: all(&v.share),
        community_charge: all(&v.cx),
        community_discharge: all(&v.dr),
        spot_buy_to_ces: all(&v.cb),
        ces_to_spot: all(&v.ds),
        soc_community: all(&v.sc),
        soc_operator: all(&v.so),
    };
    let n = flows.len();
    let arbitrage_profit = flows.arbitrage_profit(spot);
    let state_end = CesState {
        community: flows.soc_community[n - 1],
        operator: flows.soc_operator[n - 1],
    };
    OperatorWindow {
        flows,
        community_volume,
        arbitrage_profit,
        state_end,
    }
}
