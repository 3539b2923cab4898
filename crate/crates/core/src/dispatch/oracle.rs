//! Brute-force reference optimiser for small windows.
//!
//! Independent of the LP path: the battery state is restricted to a grid of
//! `soc_grid` kWh plus a finite set of off-grid states reached by the kink
//! flows of each step (charge equal to the PV surplus, discharge equal to the
//! deficit, the power limit). Every listed transition is evaluated exactly
//! (including self-discharge). Within a step the only remaining choice is the
//! heat pump output, whose cost is piecewise linear, so it is minimised over
//! its breakpoints. Restricting the state can only lose value, hence the DP
//! value bounds the true optimum from the pessimistic side.

use std::collections::HashMap;

use super::{CesState, DispatchParams, HouseholdWindow, WindowProblem};
use crate::{BesSpec, Error, Result, Topology};

pub const MAX_STEPS: usize = 16;
pub const MAX_HOUSEHOLDS: usize = 2;
/// Upper bound on enumerated DR plans.
pub const MAX_PLANS: usize = 5_000_000;
/// Bundles per shiftable origin in the storage DP.
pub const MAX_DR_UNITS: usize = 10;

/// Optimal values of one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    /// Σ over households of cash cost minus credited end-of-window storage.
    pub prosumer_objective: f64,
    /// Pass-one volume of the CES (kWh incl. credited stock), CES only.
    pub community_volume: Option<f64>,
    /// Arbitrage profit plus credited stock, only for windows without
    /// community residuals.
    pub arbitrage_objective: Option<f64>,
}

/// Dynamic-programming optimum of `p`.
pub fn dp_oracle(p: &WindowProblem, soc_grid: f64) -> Result<OracleValue> {
    p.validate()?;
    let n = p.steps();
    if n > MAX_STEPS {
        return Err(Error::OracleTooLarge(format!("{n} steps > {MAX_STEPS}")));
    }
    if p.households.len() > MAX_HOUSEHOLDS {
        return Err(Error::OracleTooLarge(format!(
            "{} households > {MAX_HOUSEHOLDS}",
            p.households.len()
        )));
    }
    if !(soc_grid > 0.0) {
        return Err(Error::InvalidArgument("SOC grid must be > 0".into()));
    }
    let hes_count = p
        .households
        .iter()
        .filter(|h| p.topology == Topology::Hes && h.devices.hes.is_some_and(|b| b.capacity > 0.0))
        .count();
    let ces_count = usize::from(p.topology == Topology::Ces && p.ces.is_some_and(|c| c.capacity > 0.0));
    if hes_count + ces_count > 1 {
        return Err(Error::OracleTooLarge("more than one storage".into()));
    }

    let mut prosumer_objective = 0.0;
    let mut x = vec![0.0; n];
    let mut r = vec![0.0; n];
    for hw in &p.households {
        let battery = match p.topology {
            Topology::Hes => hw.devices.hes.filter(|b| b.capacity > 0.0),
            Topology::Ces => None,
        };
        let sol = household_dp(hw, battery.as_ref(), &p.params, soc_grid)?;
        prosumer_objective += sol.objective;
        for t in 0..n {
            x[t] += sol.surplus[t];
            r[t] += sol.deficit[t];
        }
    }

    let (mut community_volume, mut arbitrage_objective) = (None, None);
    if p.topology == Topology::Ces {
        community_volume = Some(operator_volume_dp(&x, &r, p.ces.as_ref(), p.ces_state, &p.params, soc_grid)?);
        let idle = x.iter().chain(&r).all(|&v| v == 0.0) && p.ces_state.community == 0.0;
        if idle && p.params.arbitrage {
            arbitrage_objective = Some(arbitrage_dp(&p.spot, p.ces.as_ref(), p.ces_state.operator, &p.params, soc_grid)?);
        }
    }
    Ok(OracleValue {
        prosumer_objective,
        community_volume,
        arbitrage_objective,
    })
}

struct Prices {
    retail: f64,
    feed_in: f64,
    fuel_per_heat: f64,
    hp_cap: f64,
    cop: f64,
    ngb_cap: f64,
}

impl Prices {
    fn new(hw: &HouseholdWindow, params: &DispatchParams) -> Self {
        let d = &hw.devices;
        Self {
            retail: params.retail(),
            feed_in: params.tariff.feed_in,
            fuel_per_heat: d.ngb.map_or(f64::INFINITY, |n| params.tariff.gas_price() / n.efficiency),
            hp_cap: d.hp.map_or(0.0, |h| h.step_cap()),
            cop: d.hp.map_or(1.0, |h| h.cop),
            ngb_cap: d.ngb.map_or(0.0, |n| n.step_cap()),
        }
    }
}

impl Prices {
    /// Feasible heat pump output for heat demand `heat`.
    fn heat_range(&self, heat: f64) -> (f64, f64) {
        let lo = (heat - self.ngb_cap).max(0.0);
        (lo, heat.min(self.hp_cap).max(lo))
    }
}

/// Best cost of one step, with `charge` drawn from PV and `discharge`
/// delivered to load or heat pump. Returns (cost, export, import), or `None`
/// if infeasible.
fn step_cost(pr: &Prices, pv: f64, load: f64, heat: f64, charge: f64, discharge: f64) -> Option<(f64, f64, f64)> {
    const EPS: f64 = 1e-12;
    if charge > pv + EPS {
        return None;
    }
    let spare = (pv - charge).max(0.0);
    let lo = (heat - pr.ngb_cap).max(0.0);
    let hi = heat.min(pr.hp_cap);
    if lo > hi + EPS {
        return None;
    }
    let clamp = |h: f64| h.clamp(lo, hi.max(lo));
    let candidates = [lo, hi.max(lo), clamp((spare + discharge - load) * pr.cop), clamp((discharge - load) * pr.cop)];
    let mut best: Option<(f64, f64, f64)> = None;
    for h in candidates {
        let e = load + h / pr.cop;
        if e < discharge - EPS {
            continue;
        }
        let import = (e - spare - discharge).max(0.0);
        let export = (spare + discharge - e).max(0.0).min(spare);
        let gas = heat - h;
        let fuel = if gas > EPS { pr.fuel_per_heat * gas } else { 0.0 };
        let cost = pr.retail * import - pr.feed_in * export + fuel;
        if best.is_none_or(|b| cost < b.0) {
            best = Some((cost, export, import));
        }
    }
    best
}

struct HouseholdSolution {
    objective: f64,
    surplus: Vec<f64>,
    deficit: Vec<f64>,
}

/// DR shape supported by the DP: a single step whose shiftable load is
/// spread over its reach in `units` bundles.
struct SingleOrigin {
    origin: usize,
    amount: f64,
    units: usize,
    reach: usize,
    symmetric: bool,
}

impl SingleOrigin {
    fn in_reach(&self, t: usize) -> bool {
        let d = t.abs_diff(self.origin);
        d <= self.reach && (self.symmetric || t >= self.origin)
    }
    fn quantum(&self) -> f64 {
        self.amount / self.units as f64
    }
}

fn dr_shape(hw: &HouseholdWindow, params: &DispatchParams, grid: f64) -> Result<Option<SingleOrigin>> {
    let w = hw.devices.dr_window_steps;
    let origins: Vec<usize> = (0..hw.series.len()).filter(|&t| hw.series.shiftable[t] > 0.0).collect();
    if w == 0 || origins.is_empty() {
        return Ok(None);
    }
    if origins.len() > 1 {
        return Err(Error::OracleTooLarge(format!(
            "DR with {} shiftable steps; the DP supports one (use dr_exhaustive without storage)",
            origins.len()
        )));
    }
    let amount = hw.series.shiftable[origins[0]];
    let units = ((amount / grid).round() as usize).clamp(1, MAX_DR_UNITS);
    Ok(Some(SingleOrigin {
        origin: origins[0],
        amount,
        units,
        reach: w,
        symmetric: params.dr_direction == super::DrDirection::Symmetric,
    }))
}

/// Grid of SOC levels `0, g, 2g, …, cap`.
fn levels(cap: f64, grid: f64) -> Vec<f64> {
    let k = (cap / grid + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=k).map(|i| (i as f64 * grid).min(cap)).collect();
    if cap - v[k] > 1e-9 {
        v.push(cap);
    }
    v
}

/// Resolution of off-grid states.
const FINE: f64 = 1e-5;

// States of one step and, per state, its (predecessor, bundles placed).
type Step = (Vec<f64>, Vec<(u32, u16)>);

/// Storage move from `from` to `to`: (charge at the meter, delivered discharge).
fn transition(b: &BesSpec, from: f64, to: f64) -> Option<(f64, f64)> {
    let kept = from * b.retention();
    let limit = b.step_power_limit() + 1e-12;
    if to >= kept {
        let c = (to - kept) / b.eff_charge;
        (c <= limit).then_some((c, 0.0))
    } else {
        let d = (kept - to) * b.eff_discharge;
        (d <= limit).then_some((0.0, d))
    }
}

fn flows(b: Option<&BesSpec>, from: f64, to: f64) -> Option<(f64, f64)> {
    b.map_or(Some((0.0, 0.0)), |b| transition(b, from, to))
}

/// States of the next step and the moves allowed from each current state.
///
/// The first `lv.len()` states are the grid levels. The grid states of the
/// current step (the first `cur_grid`) reach every level within the power
/// limit, the others their two neighbouring levels. Every state may also
/// idle (exactly), run empty or full, or take one of the candidate flows (the
/// kinks of the stage cost and the power limit). Those targets are off the
/// grid and rounded to `FINE` toward the current charge, so each move stays exactly
/// feasible while the vertex paths of the continuous problem remain
/// reachable.
struct Layer {
    next: Vec<f64>,
    moves: Vec<Vec<usize>>,
}

fn layer(cur: &[f64], cur_grid: usize, lv: &[f64], b: Option<&BesSpec>, charges: &[f64], discharges: &[f64], top: f64) -> Layer {
    let Some(b) = b else {
        return Layer {
            next: vec![0.0],
            moves: vec![vec![0]; cur.len()],
        };
    };
    let key = |s: f64| (s / FINE).round() as i64;
    let down = |s: f64| (s / FINE + 1e-9).floor() * FINE;
    let up = |s: f64| (s / FINE - 1e-9).ceil() * FINE;
    let limit = b.step_power_limit();
    let mut next = lv.to_vec();
    let mut index: HashMap<i64, usize> = next.iter().enumerate().map(|(j, &s)| (key(s), j)).collect();
    let mut moves = Vec::with_capacity(cur.len());
    for (i, &s) in cur.iter().enumerate() {
        let kept = s * b.retention();
        let mut js: Vec<usize> = if i < cur_grid {
            let a = lv.partition_point(|&l| l < kept - limit / b.eff_discharge - 1e-12);
            let z = lv.partition_point(|&l| l <= kept + b.eff_charge * limit + 1e-12);
            (a..z).collect()
        } else {
            // Off the grid: the neighbouring levels only.
            let k = lv.partition_point(|&l| l < kept);
            (k.saturating_sub(1)..(k + 1).min(lv.len())).collect()
        };
        // Idle is kept exact: a rounded idle would need a flow.
        match index.get(&key(kept)) {
            Some(&j) if next[j] == kept => js.push(j),
            _ => {
                next.push(kept);
                index.entry(key(kept)).or_insert(next.len() - 1);
                js.push(next.len() - 1);
            }
        }
        let mut targets = vec![0.0, top];
        let ok = |f: &&f64| **f > 0.0 && **f <= limit;
        targets.extend(charges.iter().filter(ok).map(|c| down(kept + b.eff_charge * c)));
        targets.extend(discharges.iter().filter(ok).map(|d| up(kept - d / b.eff_discharge)));
        targets.push(down(kept + b.eff_charge * limit));
        targets.push(up(kept - limit / b.eff_discharge));
        for t in targets {
            if t < 0.0 || t > top {
                continue;
            }
            let j = *index.entry(key(t)).or_insert_with(|| {
                next.push(t);
                next.len() - 1
            });
            js.push(j);
        }
        js.sort_unstable();
        js.dedup();
        moves.push(js);
    }
    Layer { next, moves }
}

fn household_dp(hw: &HouseholdWindow, battery: Option<&BesSpec>, params: &DispatchParams, grid: f64) -> Result<HouseholdSolution> {
    let s = &hw.series;
    let n = s.len();
    let pr = Prices::new(hw, params);
    let dr = dr_shape(hw, params, grid)?;
    let lv = battery.map_or_else(Vec::new, |b| levels(b.capacity, grid));
    let m = lv.len();
    let units = dr.as_ref().map_or(0, |d| d.units);
    let us = units + 1;
    let q = dr.as_ref().map_or(0.0, |d| d.quantum());
    let credit = battery.map_or(0.0, |b| params.terminal_value_factor * b.eff_discharge * pr.retail);
    let load_at = |t: usize, du: usize| {
        s.load(t) - dr.as_ref().filter(|d| d.origin == t).map_or(0.0, |d| d.amount) + du as f64 * q
    };

    const INF: f64 = f64::INFINITY;
    // value[i * us + u]: best cost so far in state i with u bundles placed.
    let mut states = vec![if battery.is_some() { hw.soc0 } else { 0.0 }];
    let mut value = vec![INF; us];
    value[0] = 0.0;
    let mut trail: Vec<Step> = Vec::with_capacity(n);
    let mut on_grid = 1;
    for t in 0..n {
        let du_max = dr.as_ref().filter(|d| d.in_reach(t)).map_or(0, |d| d.units);
        let (lo, hi) = pr.heat_range(s.heat[t]);
        let (mut charges, mut discharges) = (vec![s.pv[t]], Vec::new());
        for du in 0..=du_max {
            for h in [lo, hi] {
                let e = load_at(t, du) + h / pr.cop;
                charges.push(s.pv[t] - e);
                discharges.push(e - s.pv[t]);
            }
        }
        let cap = battery.map_or(0.0, |b| b.capacity);
        let Layer { next, moves } = layer(&states, on_grid, &lv, battery, &charges, &discharges, cap);
        on_grid = m;
        let mut nv = vec![INF; next.len() * us];
        let mut back = vec![(u32::MAX, 0u16); next.len() * us];
        for i in 0..states.len() {
            for u in 0..us {
                let v0 = value[i * us + u];
                if v0 == INF {
                    continue;
                }
                for du in 0..=du_max.min(units - u) {
                    let load = load_at(t, du);
                    for &j in &moves[i] {
                        let Some((c, d)) = flows(battery, states[i], next[j]) else { continue };
                        let Some((cost, _, _)) = step_cost(&pr, s.pv[t], load, s.heat[t], c, d) else { continue };
                        let k = j * us + u + du;
                        if v0 + cost < nv[k] {
                            nv[k] = v0 + cost;
                            back[k] = (i as u32, du as u16);
                        }
                    }
                }
            }
        }
        trail.push((states, back));
        states = next;
        value = nv;
    }

    // Terminal: all bundles placed, credit for stored energy.
    let mut best = (INF, usize::MAX);
    for (j, &soc) in states.iter().enumerate() {
        let k = j * us + units;
        if value[k] < INF && value[k] - credit * soc < best.0 {
            best = (value[k] - credit * soc, k);
        }
    }
    if best.0 == INF {
        return Err(Error::Infeasible {
            window: 0,
            message: "no feasible DP path".into(),
        });
    }

    // Walk back to recover the residual flows.
    let mut surplus = vec![0.0; n];
    let mut deficit = vec![0.0; n];
    let mut k = best.1;
    let mut after = states;
    for t in (0..n).rev() {
        let (before, back) = &trail[t];
        let (i, du) = back[k];
        let (i, du) = (i as usize, du as usize);
        let (c, d) = flows(battery, before[i], after[k / us]).expect("move on path");
        let (_, export, import) = step_cost(&pr, s.pv[t], load_at(t, du), s.heat[t], c, d).expect("feasible on path");
        surplus[t] = export;
        deficit[t] = import;
        k = i * us + (k % us - du);
        after = before.clone();
    }
    Ok(HouseholdSolution {
        objective: best.0,
        surplus,
        deficit,
    })
}

/// Pass-one DP of the operator: maximal shared volume plus credited stock.
pub fn operator_volume_dp(x: &[f64], r: &[f64], ces: Option<&BesSpec>, state: CesState, params: &DispatchParams, grid: f64) -> Result<f64> {
    let n = x.len();
    let share = |t: usize, cx: f64, dr: f64| -> f64 {
        if params.sharing {
            (x[t] - cx).min(r[t] - dr).max(0.0)
        } else {
            0.0
        }
    };
    let Some(b) = ces.filter(|c| c.capacity > 0.0) else {
        return Ok((0..n).map(|t| share(t, 0.0, 0.0)).sum());
    };
    let kappa = params.terminal_value_factor * b.eff_discharge;
    let lv = levels(b.capacity, grid);
    let m = lv.len();
    const NEG: f64 = f64::NEG_INFINITY;
    let mut states = vec![state.community];
    let mut value = vec![0.0];
    let mut operator_stock = state.operator;
    let mut on_grid = 1;
    for t in 0..n {
        operator_stock *= b.retention();
        let room = b.capacity - operator_stock + 1e-12;
        let charges = [x[t], x[t] - r[t]];
        let discharges = [r[t], r[t] - x[t]];
        let Layer { next, moves } = layer(&states, on_grid, &lv, Some(b), &charges, &discharges, room.min(b.capacity));
        on_grid = m;
        let mut nv = vec![NEG; next.len()];
        for i in 0..states.len() {
            if value[i] == NEG {
                continue;
            }
            for &j in &moves[i] {
                if next[j] > room {
                    continue;
                }
                let Some((cx, dr)) = transition(b, states[i], next[j]) else { continue };
                if cx > x[t] + 1e-12 || dr > r[t] + 1e-12 {
                    continue;
                }
                nv[j] = nv[j].max(value[i] + share(t, cx, dr) + dr);
            }
        }
        states = next;
        value = nv;
    }
    let best = value
        .iter()
        .zip(&states)
        .filter(|(v, _)| **v > NEG)
        .map(|(v, s)| v + kappa * s)
        .fold(NEG, f64::max);
    if best == NEG {
        return Err(Error::Infeasible {
            window: 0,
            message: "no feasible operator path".into(),
        });
    }
    Ok(best)
}

/// Spot trading DP for a CES without community residuals.
pub fn arbitrage_dp(spot: &[f64], ces: Option<&BesSpec>, stock: f64, params: &DispatchParams, grid: f64) -> Result<f64> {
    let Some(b) = ces.filter(|c| c.capacity > 0.0) else {
        return Ok(0.0);
    };
    let n = spot.len();
    let mean = (spot.iter().sum::<f64>() / n as f64).max(0.0);
    let kappa = params.terminal_value_factor * b.eff_discharge * mean;
    let lv = levels(b.capacity, grid);
    let m = lv.len();
    const NEG: f64 = f64::NEG_INFINITY;
    let mut states = vec![stock];
    let mut value = vec![0.0];
    let mut on_grid = 1;
    for &price in spot {
        let Layer { next, moves } = layer(&states, on_grid, &lv, Some(b), &[], &[], b.capacity);
        on_grid = m;
        let mut nv = vec![NEG; next.len()];
        for i in 0..states.len() {
            if value[i] == NEG {
                continue;
            }
            for &j in &moves[i] {
                let Some((buy, sell)) = transition(b, states[i], next[j]) else { continue };
                nv[j] = nv[j].max(value[i] + price * (sell - buy));
            }
        }
        states = next;
        value = nv;
    }
    Ok(value
        .iter()
        .zip(&states)
        .filter(|(v, _)| **v > NEG)
        .map(|(v, s)| v + kappa * s)
        .fold(NEG, f64::max))
}

/// Exact optimum of a storage-free household with DR by enumerating every
/// assignment of `quantum`-sized bundles to destinations in reach. Shiftable
/// amounts must be whole multiples of `quantum`.
pub fn dr_exhaustive(hw: &HouseholdWindow, params: &DispatchParams, quantum: f64) -> Result<f64> {
    let s = &hw.series;
    let n = s.len();
    if n > MAX_STEPS {
        return Err(Error::OracleTooLarge(format!("{n} steps > {MAX_STEPS}")));
    }
    let pr = Prices::new(hw, params);
    let w = hw.devices.dr_window_steps;
    let symmetric = params.dr_direction == super::DrDirection::Symmetric;
    let mut origins = Vec::new();
    for t in 0..n {
        let a = s.shiftable[t];
        if a <= 0.0 || w == 0 {
            continue;
        }
        let units = (a / quantum).round();
        if (units * quantum - a).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "shiftable {a} at step {t} is not a multiple of {quantum}"
            )));
        }
        let lo = if symmetric { t.saturating_sub(w) } else { t };
        let dests: Vec<usize> = (lo..=(t + w).min(n - 1)).collect();
        origins.push((t, units as usize, dests));
    }
    let mut count: f64 = 1.0;
    for (_, u, d) in &origins {
        count *= binomial(u + d.len() - 1, d.len() - 1);
    }
    if count > MAX_PLANS as f64 {
        return Err(Error::OracleTooLarge(format!("{count:.0} DR plans")));
    }

    let mut load: Vec<f64> = (0..n).map(|t| s.fixed[t] + s.shiftable[t]).collect();
    for (t, _, _) in &origins {
        load[*t] -= s.shiftable[*t];
    }
    let mut best = f64::INFINITY;
    enumerate(&origins, 0, &mut load, quantum, &mut |l: &[f64]| {
        let mut total = 0.0;
        for (t, &lt) in l.iter().enumerate().take(n) {
            match step_cost(&pr, s.pv[t], lt, s.heat[t], 0.0, 0.0) {
                Some((c, _, _)) => total += c,
                None => return,
            }
        }
        best = best.min(total);
    });
    if best == f64::INFINITY {
        return Err(Error::Infeasible {
            window: 0,
            message: "no feasible DR plan".into(),
        });
    }
    Ok(best)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn enumerate(origins: &[(usize, usize, Vec<usize>)], idx: usize, load: &mut Vec<f64>, q: f64, visit: &mut dyn FnMut(&[f64])) {
    if idx == origins.len() {
        visit(load);
        return;
    }
    let (_, units, dests) = &origins[idx];
    distribute(*units, dests, 0, load, q, &mut |l| enumerate(origins, idx + 1, l, q, visit));
}

/// All ways of placing `units` identical bundles on `dests[from..]`.
fn distribute(units: usize, dests: &[usize], from: usize, load: &mut Vec<f64>, q: f64, visit: &mut dyn FnMut(&mut Vec<f64>)) {
    if from + 1 == dests.len() {
        load[dests[from]] += units as f64 * q;
        visit(load);
        load[dests[from]] -= units as f64 * q;
        return;
    }
    for k in 0..=units {
        load[dests[from]] += k as f64 * q;
        distribute(units - k, dests, from + 1, load, q, visit);
        load[dests[from]] -= k as f64 * q;
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::super::{HouseholdDevices, HouseholdSeries};
    use super::*;

    fn toy(battery: Option<BesSpec>) -> WindowProblem {
        WindowProblem {
            households: vec![HouseholdWindow {
                series: HouseholdSeries {
                    fixed: vec![1.0; 4],
                    shiftable: vec![0.0; 4],
                    heat: vec![0.0; 4],
                    pv: vec![0.0, 3.0, 0.0, 0.0],
                },
                devices: HouseholdDevices {
                    hes: battery,
                    ..Default::default()
                },
                soc0: 0.0,
            }],
            spot: vec![0.03; 4],
            ces: None,
            ces_state: CesState::default(),
            topology: Topology::Hes,
            params: DispatchParams::default(),
        }
    }

    #[test]
    fn four_step_store_versus_export() {
        let b = BesSpec::new(2.0, 4.0).unwrap();
        let with = dp_oracle(&toy(Some(b)), 0.01).unwrap().prosumer_objective;
        let without = dp_oracle(&toy(None), 0.01).unwrap().prosumer_objective;
        assert_abs_diff_eq!(with, 0.3485, epsilon = 5e-4);
        assert_abs_diff_eq!(without, 0.6268, epsilon = 1e-9);
    }

    #[test]
    fn zero_storage_is_arithmetic() {
        let v = dp_oracle(&toy(None), 0.01).unwrap().prosumer_objective;
        assert_abs_diff_eq!(v, 3.0 * 0.2916 - 2.0 * 0.124, epsilon = 1e-12);
    }

    #[test]
    fn coarse_and_fine_grids_agree() {
        let b = BesSpec::new(2.0, 4.0).unwrap();
        let fine = dp_oracle(&toy(Some(b)), 0.01).unwrap().prosumer_objective;
        let coarse = dp_oracle(&toy(Some(b)), 0.1).unwrap().prosumer_objective;
        assert!((fine - coarse).abs() <= 0.1 * 0.2916);
        assert!(coarse >= fine - 1e-12);
    }

    #[test]
    fn size_limits() {
        let mut p = toy(None);
        p.spot = vec![0.0; 17];
        let h = &mut p.households[0].series;
        for v in [&mut h.fixed, &mut h.shiftable, &mut h.heat, &mut h.pv] {
            v.resize(17, 0.0);
        }
        assert!(matches!(dp_oracle(&p, 0.01), Err(Error::OracleTooLarge(_))));
    }

    #[test]
    fn arbitrage_closed_form() {
        let b = BesSpec::new(10.0, 4.0).unwrap();
        let params = DispatchParams {
            terminal_value_factor: 0.0,
            ..Default::default()
        };
        let v = arbitrage_dp(&[0.099, 0.01, 0.099, 0.10], Some(&b), 0.0, &params, 0.01).unwrap();
        assert_abs_diff_eq!(v, 0.8025, epsilon = 1e-4);
    }

    #[test]
    fn community_serving_volume() {
        let b = BesSpec::new(10.0, 2.0).unwrap();
        let params = DispatchParams {
            terminal_value_factor: 0.0,
            ..Default::default()
        };
        let v = operator_volume_dp(&[5.0, 0.0, 0.0], &[0.0, 0.0, 5.0], Some(&b), CesState::default(), &params, 0.01).unwrap();
        assert!(v <= 4.5125 + 1e-9 && v > 4.5125 - 0.01, "{v}");
    }

    #[test]
    fn dr_enumeration_shifts_onto_surplus() {
        // Load 1 kWh with 40 % shiftable at step 0, PV surplus at step 8.
        let n = 12;
        let mut s = HouseholdSeries {
            fixed: vec![0.0; n],
            shiftable: vec![0.0; n],
            heat: vec![0.0; n],
            pv: vec![0.0; n],
        };
        s.fixed[0] = 0.6;
        s.shiftable[0] = 0.4;
        s.pv[8] = 1.0;
        let hw = HouseholdWindow {
            series: s,
            devices: HouseholdDevices {
                dr_window_steps: 16,
                ..Default::default()
            },
            soc0: 0.0,
        };
        let p = DispatchParams::default();
        let v = dr_exhaustive(&hw, &p, 0.1).unwrap();
        assert_abs_diff_eq!(v, 0.6 * 0.2916 - 0.6 * 0.124, epsilon = 1e-12);
    }
}
