//! Two-step rolling-horizon dispatch.
//!
//! Step one optimises every prosumer on its own devices (PV, heat pump or
//! boiler, demand response and, in the HES topology, its own battery). In the
//! CES topology the leftover surplus `X` and deficit `R` of all households are
//! pooled and the utility dispatches the community battery in two
//! lexicographic passes: community self-consumption first, spot arbitrage
//! with the remaining headroom second.
//!
//! The year is solved as consecutive daily windows with the state of charge
//! carried across window boundaries.

mod dr;
mod lp;
mod operator;
pub mod oracle;
mod prosumer;
mod rolling;

use serde::{Deserialize, Serialize};

use crate::market::TariffScheme;
use crate::{BesSpec, Error, HpSpec, NgbSpec, Result, Topology, STEPS_PER_DAY};

pub use dr::{DrDirection, DrShiftPlan, Shift};
pub use operator::{optimize_operator_window, OperatorWindow};
pub use prosumer::{optimize_prosumer_window, ProsumerWindow};
pub use rolling::{allocate_community, assemble, rolling_run, run_operator, run_prosumers, ProsumerStage};

/// Tolerance for flow balances and bounds on solver output.
pub const FLOW_TOL: f64 = 1e-6;
/// SOC above this counts as "charged".
pub const CHARGED_SOC_THRESHOLD: f64 = 1e-6;

/// Knobs shared by every window of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispatchParams {
    pub tariff: TariffScheme,
    /// Share of its later value credited to energy still stored at the end of
    /// a window.
    pub terminal_value_factor: f64,
    /// Tie-breaking cost per kWh of storage throughput and shifted load.
    pub throughput_penalty: f64,
    /// Let the operator trade CES headroom on the spot market.
    pub arbitrage: bool,
    /// Let CES households exchange surplus directly (no storage needed).
    pub sharing: bool,
    pub dr_direction: DrDirection,
    pub window_steps: usize,
    /// Simultaneous charge and discharge above this triggers the MILP re-solve.
    pub exclusivity_tol: f64,
}

impl Default for DispatchParams {
    fn default() -> Self {
        Self {
            tariff: TariffScheme::default(),
            terminal_value_factor: 0.8,
            throughput_penalty: 1e-6,
            arbitrage: true,
            sharing: true,
            dr_direction: DrDirection::Symmetric,
            window_steps: STEPS_PER_DAY,
            exclusivity_tol: 1e-7,
        }
    }
}

impl DispatchParams {
    pub fn retail(&self) -> f64 {
        crate::market::retail_price(&self.tariff)
    }

    pub fn validate(&self) -> Result<()> {
        self.tariff.validate()?;
        if !(0.0..=1.0).contains(&self.terminal_value_factor) {
            return Err(Error::Config("terminal_value_factor must lie in [0, 1]".into()));
        }
        if !(self.throughput_penalty >= 0.0 && self.throughput_penalty < 1e-3) {
            return Err(Error::Config("throughput_penalty must lie in [0, 1e-3)".into()));
        }
        if self.window_steps == 0 {
            return Err(Error::Config("window_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Devices of one household.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HouseholdDevices {
    pub hp: Option<HpSpec>,
    pub ngb: Option<NgbSpec>,
    /// Own battery, used only in the HES topology.
    pub hes: Option<BesSpec>,
    /// Demand-response reach in steps; 0 disables shifting.
    pub dr_window_steps: usize,
}

/// Per-step inputs of one household (annual or window slice).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HouseholdSeries {
    pub fixed: Vec<f64>,
    pub shiftable: Vec<f64>,
    pub heat: Vec<f64>,
    pub pv: Vec<f64>,
}

impl HouseholdSeries {
    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }

    pub fn load(&self, t: usize) -> f64 {
        self.fixed[t] + self.shiftable[t]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.fixed.len();
        if self.shiftable.len() != n || self.heat.len() != n || self.pv.len() != n {
            return Err(Error::Series("household series have different lengths".into()));
        }
        let all = [&self.fixed, &self.shiftable, &self.heat, &self.pv];
        if all.iter().any(|s| s.iter().any(|v| !v.is_finite() || *v < 0.0)) {
            return Err(Error::Series("household series must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            fixed: self.fixed[range.clone()].to_vec(),
            shiftable: self.shiftable[range.clone()].to_vec(),
            heat: self.heat[range.clone()].to_vec(),
            pv: self.pv[range].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub series: HouseholdSeries,
    pub devices: HouseholdDevices,
}

/// Annual inputs of a community run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub households: Vec<Household>,
    pub spot: Vec<f64>,
}

impl Community {
    pub fn steps(&self) -> usize {
        self.spot.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.households.is_empty() {
            return Err(Error::InvalidArgument("community without households".into()));
        }
        for h in &self.households {
            h.series.validate()?;
            if h.series.len() != self.spot.len() {
                return Err(Error::Series("household and spot series lengths differ".into()));
            }
        }
        if self.spot.iter().any(|v| !v.is_finite()) {
            return Err(Error::Series("spot prices must be finite".into()));
        }
        Ok(())
    }
}

/// Split SOC of the CES: community account (PV surplus for members) and
/// operator account (spot trading).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CesState {
    pub community: f64,
    pub operator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdWindow {
    pub series: HouseholdSeries,
    pub devices: HouseholdDevices,
    /// HES state of charge at the window start.
    pub soc0: f64,
}

/// One optimisation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowProblem {
    pub households: Vec<HouseholdWindow>,
    pub spot: Vec<f64>,
    pub ces: Option<BesSpec>,
    pub ces_state: CesState,
    pub topology: Topology,
    pub params: DispatchParams,
}

impl WindowProblem {
    pub fn steps(&self) -> usize {
        self.spot.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.steps();
        if n == 0 {
            return Err(Error::InvalidArgument("empty window".into()));
        }
        for h in &self.households {
            h.series.validate()?;
            if h.series.len() != n {
                return Err(Error::InvalidArgument("window slices have different lengths".into()));
            }
            if let Some(b) = h.devices.hes {
                if !(h.soc0 >= 0.0 && h.soc0 <= b.capacity + 1e-9) {
                    return Err(Error::SocBounds {
                        soc: h.soc0,
                        capacity: b.capacity,
                    });
                }
            }
        }
        if let Some(c) = self.ces {
            let s = self.ces_state;
            if s.community < 0.0 || s.operator < 0.0 || s.community + s.operator > c.capacity + 1e-9 {
                return Err(Error::SocBounds {
                    soc: s.community + s.operator,
                    capacity: c.capacity,
                });
            }
        }
        Ok(())
    }
}

/// Per-step flows of one household. For CES members the `storage_to_*`
/// fields hold deliveries from the community (shared PV and CES discharge)
/// and `pv_to_storage` the PV handed to the community.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HouseholdFlows {
    pub pv_to_load: Vec<f64>,
    pub pv_to_hp: Vec<f64>,
    pub pv_to_storage: Vec<f64>,
    pub pv_to_grid: Vec<f64>,
    pub grid_to_load: Vec<f64>,
    pub grid_to_hp: Vec<f64>,
    pub storage_to_load: Vec<f64>,
    pub storage_to_hp: Vec<f64>,
    pub dr_out: Vec<f64>,
    pub dr_in: Vec<f64>,
    pub hp_heat: Vec<f64>,
    pub ngb_heat: Vec<f64>,
    /// HES state of charge at the end of each step (empty without HES).
    pub soc: Vec<f64>,
}

macro_rules! each_flow {
    ($self:ident, $other:ident, $body:expr) => {{
        let f = $body;
        f(&mut $self.pv_to_load, &$other.pv_to_load);
        f(&mut $self.pv_to_hp, &$other.pv_to_hp);
        f(&mut $self.pv_to_storage, &$other.pv_to_storage);
        f(&mut $self.pv_to_grid, &$other.pv_to_grid);
        f(&mut $self.grid_to_load, &$other.grid_to_load);
        f(&mut $self.grid_to_hp, &$other.grid_to_hp);
        f(&mut $self.storage_to_load, &$other.storage_to_load);
        f(&mut $self.storage_to_hp, &$other.storage_to_hp);
        f(&mut $self.dr_out, &$other.dr_out);
        f(&mut $self.dr_in, &$other.dr_in);
        f(&mut $self.hp_heat, &$other.hp_heat);
        f(&mut $self.ngb_heat, &$other.ngb_heat);
        f(&mut $self.soc, &$other.soc);
    }};
}

impl HouseholdFlows {
    pub fn zeros(n: usize) -> Self {
        let z = vec![0.0; n];
        Self {
            pv_to_load: z.clone(),
            pv_to_hp: z.clone(),
            pv_to_storage: z.clone(),
            pv_to_grid: z.clone(),
            grid_to_load: z.clone(),
            grid_to_hp: z.clone(),
            storage_to_load: z.clone(),
            storage_to_hp: z.clone(),
            dr_out: z.clone(),
            dr_in: z.clone(),
            hp_heat: z.clone(),
            ngb_heat: z,
            soc: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pv_to_load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pv_to_load.is_empty()
    }

    pub fn append(&mut self, other: &HouseholdFlows) {
        each_flow!(self, other, |a: &mut Vec<f64>, b: &Vec<f64>| a.extend_from_slice(b));
    }

    pub fn with_capacity(n: usize) -> Self {
        let v = || Vec::with_capacity(n);
        Self {
            pv_to_load: v(),
            pv_to_hp: v(),
            pv_to_storage: v(),
            pv_to_grid: v(),
            grid_to_load: v(),
            grid_to_hp: v(),
            storage_to_load: v(),
            storage_to_hp: v(),
            dr_out: v(),
            dr_in: v(),
            hp_heat: v(),
            ngb_heat: v(),
            soc: Vec::new(),
        }
    }

    /// Electricity drawn by the heat pump at step `t`.
    pub fn hp_electric(&self, t: usize) -> f64 {
        self.pv_to_hp[t] + self.grid_to_hp[t] + self.storage_to_hp[t]
    }

    /// Grid purchases at step `t`.
    pub fn grid_purchase(&self, t: usize) -> f64 {
        self.grid_to_load[t] + self.grid_to_hp[t]
    }

    /// Charge into / discharge out of the own battery at step `t`.
    pub fn storage_charge(&self, t: usize) -> f64 {
        self.pv_to_storage[t]
    }

    pub fn storage_discharge(&self, t: usize) -> f64 {
        self.storage_to_load[t] + self.storage_to_hp[t]
    }
}

/// Per-step CES flows, pooled over the community.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OperatorFlows {
    /// Surplus passed straight to members with a deficit.
    pub direct_share: Vec<f64>,
    pub community_charge: Vec<f64>,
    pub community_discharge: Vec<f64>,
    pub spot_buy_to_ces: Vec<f64>,
    pub ces_to_spot: Vec<f64>,
    pub soc_community: Vec<f64>,
    pub soc_operator: Vec<f64>,
}

impl OperatorFlows {
    pub fn zeros(n: usize) -> Self {
        let z = vec![0.0; n];
        Self {
            direct_share: z.clone(),
            community_charge: z.clone(),
            community_discharge: z.clone(),
            spot_buy_to_ces: z.clone(),
            ces_to_spot: z.clone(),
            soc_community: z.clone(),
            soc_operator: z,
        }
    }

    pub fn len(&self) -> usize {
        self.direct_share.len()
    }

    pub fn is_empty(&self) -> bool {
        self.direct_share.is_empty()
    }

    pub fn append(&mut self, o: &OperatorFlows) {
        self.direct_share.extend_from_slice(&o.direct_share);
        self.community_charge.extend_from_slice(&o.community_charge);
        self.community_discharge.extend_from_slice(&o.community_discharge);
        self.spot_buy_to_ces.extend_from_slice(&o.spot_buy_to_ces);
        self.ces_to_spot.extend_from_slice(&o.ces_to_spot);
        self.soc_community.extend_from_slice(&o.soc_community);
        self.soc_operator.extend_from_slice(&o.soc_operator);
    }

    pub fn soc(&self, t: usize) -> f64 {
        self.soc_community[t] + self.soc_operator[t]
    }

    pub fn soc_trajectory(&self) -> Vec<f64> {
        (0..self.len()).map(|t| self.soc(t)).collect()
    }

    pub fn charge(&self, t: usize) -> f64 {
        self.community_charge[t] + self.spot_buy_to_ces[t]
    }

    pub fn discharge(&self, t: usize) -> f64 {
        self.community_discharge[t] + self.ces_to_spot[t]
    }

    /// Community energy leaving the surplus pool: direct sharing plus charge.
    pub fn community_out(&self, t: usize) -> f64 {
        self.direct_share[t] + self.community_charge[t]
    }

    /// Community energy reaching members: direct sharing plus discharge.
    pub fn community_in(&self, t: usize) -> f64 {
        self.direct_share[t] + self.community_discharge[t]
    }

    pub fn arbitrage_profit(&self, spot: &[f64]) -> f64 {
        (0..self.len())
            .map(|t| spot[t] * (self.ces_to_spot[t] - self.spot_buy_to_ces[t]))
            .sum()
    }
}

/// Storage of a run, addressed by [`DispatchResult::soc`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StorageId {
    Ces,
    Hes(usize),
}

impl std::fmt::Display for StorageId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StorageId::Ces => f.write_str("ces"),
            StorageId::Hes(h) => write!(f, "hes_{}", h + 1),
        }
    }
}

/// Annual (or multi-window) outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub topology: Topology,
    pub households: Vec<HouseholdFlows>,
    pub operator: Option<OperatorFlows>,
    /// Capacity of every storage (CES first if present, else HES by household).
    pub ces_capacity: f64,
    pub hes_capacity: Vec<f64>,
    /// Yearly energy cost per household, €.
    pub eu_cost: Vec<f64>,
    /// Utility margin on retail sales plus spot arbitrage (CES only), €.
    pub op_profit: f64,
    pub arbitrage_profit: f64,
    /// Shift plans per household and window, indices relative to the run.
    pub dr_plans: Vec<DrShiftPlan>,
}

impl DispatchResult {
    pub fn steps(&self) -> usize {
        self.households.first().map_or(0, |h| h.len())
    }

    pub fn storage_ids(&self) -> Vec<StorageId> {
        match self.topology {
            Topology::Ces => vec![StorageId::Ces],
            Topology::Hes => (0..self.households.len())
                .filter(|&h| self.hes_capacity.get(h).copied().unwrap_or(0.0) > 0.0)
                .map(StorageId::Hes)
                .collect(),
        }
    }

    /// SOC trajectory and capacity of `id`.
    pub fn soc(&self, id: StorageId) -> Result<(Vec<f64>, f64)> {
        match id {
            StorageId::Ces => {
                let op = self
                    .operator
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("run has no CES".into()))?;
                Ok((op.soc_trajectory(), self.ces_capacity))
            }
            StorageId::Hes(h) => {
                let flows = self
                    .households
                    .get(h)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown storage {id}")))?;
                let cap = self.hes_capacity.get(h).copied().unwrap_or(0.0);
                if flows.soc.is_empty() || cap <= 0.0 {
                    return Err(Error::InvalidArgument(format!("household {} has no HES", h + 1)));
                }
                Ok((flows.soc.clone(), cap))
            }
        }
    }

    /// Total stored self-consumption (PV handed to storage or community).
    pub fn storage_self_consumption(&self) -> f64 {
        self.households.iter().map(|h| h.pv_to_storage.iter().sum::<f64>()).sum()
    }

    pub fn total_eu_cost(&self) -> f64 {
        self.eu_cost.iter().sum()
    }
}

/// Yearly cash cost of a household from its flows.
pub(crate) fn household_cost(flows: &HouseholdFlows, devices: &HouseholdDevices, params: &DispatchParams, ces_member: bool) -> f64 {
    let tariff = &params.tariff;
    let retail = params.retail();
    let fuel_per_heat = devices.ngb.map_or(0.0, |n| tariff.gas_price() / n.efficiency);
    let mut cost = 0.0;
    for t in 0..flows.len() {
        cost += retail * flows.grid_purchase(t) + fuel_per_heat * flows.ngb_heat[t]
            - tariff.feed_in * flows.pv_to_grid[t];
        if ces_member {
            cost += tariff.community_charge_levy() * flows.pv_to_storage[t]
                + tariff.community_delivery_fee() * (flows.storage_to_load[t] + flows.storage_to_hp[t]);
        }
    }
    cost
}

/// Checks every per-step invariant of a finished run against its inputs:
/// PV, load and heat balances, SOC recursion and bounds, exclusivity of
/// charge and discharge, DR conservation per window and reach.
pub fn check_invariants(result: &DispatchResult, community: &Community, params: &DispatchParams, ces: Option<&BesSpec>) -> Result<()> {
    let fail = |msg: String| Err(Error::Mismatch(msg));
    let tol = FLOW_TOL;
    let n = community.steps();
    let w = params.window_steps;
    for (h, (flows, hh)) in result.households.iter().zip(&community.households).enumerate() {
        let s = &hh.series;
        if flows.len() != n {
            return fail(format!("household {h}: {} steps, expected {n}", flows.len()));
        }
        let all: [&Vec<f64>; 12] = [
            &flows.pv_to_load,
            &flows.pv_to_hp,
            &flows.pv_to_storage,
            &flows.pv_to_grid,
            &flows.grid_to_load,
            &flows.grid_to_hp,
            &flows.storage_to_load,
            &flows.storage_to_hp,
            &flows.dr_out,
            &flows.dr_in,
            &flows.hp_heat,
            &flows.ngb_heat,
        ];
        for t in 0..n {
            if all.iter().any(|v| v[t] < -tol) {
                return fail(format!("household {h} step {t}: negative flow"));
            }
            let pv = flows.pv_to_load[t] + flows.pv_to_hp[t] + flows.pv_to_storage[t] + flows.pv_to_grid[t];
            if (pv - s.pv[t]).abs() > tol {
                return fail(format!("household {h} step {t}: PV balance {pv} vs {}", s.pv[t]));
            }
            let supply = flows.pv_to_load[t] + flows.grid_to_load[t] + flows.storage_to_load[t];
            let demand = s.load(t) - flows.dr_out[t] + flows.dr_in[t];
            if (supply - demand).abs() > tol {
                return fail(format!("household {h} step {t}: load balance {supply} vs {demand}"));
            }
            if flows.dr_out[t] > s.shiftable[t] + tol {
                return fail(format!("household {h} step {t}: shifted more than shiftable"));
            }
            let heat = flows.hp_heat[t] + flows.ngb_heat[t];
            if (heat - s.heat[t]).abs() > tol {
                return fail(format!("household {h} step {t}: heat balance {heat} vs {}", s.heat[t]));
            }
            if let Some(hp) = hh.devices.hp {
                if (flows.hp_electric(t) - flows.hp_heat[t] / hp.cop).abs() > tol {
                    return fail(format!("household {h} step {t}: heat pump electricity"));
                }
                if flows.hp_heat[t] > hp.step_cap() + tol {
                    return fail(format!("household {h} step {t}: heat pump cap"));
                }
            } else if flows.hp_heat[t] > tol || flows.hp_electric(t) > tol {
                return fail(format!("household {h} step {t}: heat pump flow without heat pump"));
            }
            match hh.devices.ngb {
                Some(ngb) if flows.ngb_heat[t] > ngb.step_cap() + tol => {
                    return fail(format!("household {h} step {t}: boiler cap"))
                }
                None if flows.ngb_heat[t] > tol => return fail(format!("household {h} step {t}: boiler flow without boiler")),
                _ => {}
            }
        }
        // DR conservation within each window.
        for start in (0..n).step_by(w) {
            let end = (start + w).min(n);
            let out: f64 = flows.dr_out[start..end].iter().sum();
            let inn: f64 = flows.dr_in[start..end].iter().sum();
            if (out - inn).abs() > tol * (end - start) as f64 {
                return fail(format!("household {h} window at {start}: DR out {out} vs in {inn}"));
            }
        }
        if let Some(plan) = result.dr_plans.get(h) {
            let reach = hh.devices.dr_window_steps;
            if plan.max_distance(1e-7) > reach {
                return fail(format!("household {h}: shift beyond {reach} steps"));
            }
            for s in &plan.shifts {
                if s.amount > 1e-7 && s.from / w != s.to / w {
                    return fail(format!("household {h}: shift crosses a window boundary"));
                }
            }
        }
        if result.topology == Topology::Hes {
            if let Some(spec) = hh.devices.hes.filter(|b| b.capacity > 0.0) {
                check_soc_path(
                    &flows.soc,
                    |t| flows.storage_charge(t),
                    |t| flows.storage_discharge(t),
                    &spec,
                    0.0,
                    params.exclusivity_tol,
                )
                .map_err(|e| Error::Mismatch(format!("household {h}: {e}")))?;
            }
        }
    }
    if let (Topology::Ces, Some(op)) = (result.topology, result.operator.as_ref()) {
        let spec = ces.copied().unwrap_or_else(|| BesSpec::new(0.0, 1.0).expect("valid"));
        for t in 0..n {
            let x: f64 = result.households.iter().map(|f| f.pv_to_storage[t]).sum();
            if (x - op.community_out(t)).abs() > tol {
                return fail(format!("step {t}: community outflow not allocated"));
            }
            let r: f64 = result
                .households
                .iter()
                .map(|f| f.storage_to_load[t] + f.storage_to_hp[t])
                .sum();
            if (r - op.community_in(t)).abs() > tol {
                return fail(format!("step {t}: community inflow not allocated"));
            }
        }
        if spec.capacity > 0.0 {
            check_soc_path(&op.soc_trajectory(), |t| op.charge(t), |t| op.discharge(t), &spec, 0.0, params.exclusivity_tol)?;
        }
    }
    Ok(())
}

/// SOC recursion, bounds, power limits and exclusivity along a trajectory.
/// `soc0` is the state before the first step; window restarts are part of
/// the trajectory because the carried SOC is the previous end value.
pub(crate) fn check_soc_path(
    soc: &[f64],
    charge: impl Fn(usize) -> f64,
    discharge: impl Fn(usize) -> f64,
    spec: &BesSpec,
    soc0: f64,
    exclusivity_tol: f64,
) -> Result<()> {
    let tol = FLOW_TOL;
    let limit = spec.step_power_limit();
    let mut prev = soc0;
    for (t, &s) in soc.iter().enumerate() {
        let (c, d) = (charge(t), discharge(t));
        if c > exclusivity_tol.max(1e-7) && d > exclusivity_tol.max(1e-7) {
            return Err(Error::SimultaneousChargeDischarge { charge: c, discharge: d });
        }
        if c > limit + tol || d > limit + tol {
            return Err(Error::PowerLimit {
                requested: c.max(d),
                limit,
            });
        }
        let expected = prev * spec.retention() + spec.eff_charge * c - d / spec.eff_discharge;
        if (expected - s).abs() > tol {
            return Err(Error::Mismatch(format!("step {t}: SOC {s} but recursion gives {expected}")));
        }
        if s < -tol || s > spec.capacity + tol {
            return Err(Error::SocBounds {
                soc: s,
                capacity: spec.capacity,
            });
        }
        prev = s;
    }
    Ok(())
}
