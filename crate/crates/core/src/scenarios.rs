//! The five flexibility scenarios, the PV × BES sensitivity grid and the
//! multi-year investment assessment.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assessment::{aggregate, afb, coverage_ratio, grid_summary, GridSummary, KpiReport};
use crate::config::{Baseline, Config};
use crate::costmodel::installation_eac;
use crate::devices::pv_output;
use crate::dispatch::{assemble, run_prosumers, Community, DispatchParams, DispatchResult, Household, HouseholdDevices, HouseholdSeries, ProsumerStage};
use crate::profiles::{split_shiftable, CommunityData};
use crate::reduction::{find_ces_opt, sc_vs_capacity, CapacitySweep, ReductionCurve};
use crate::{BesSpec, EnergyAggregates, Error, PvSpec, Result, Topology};

/// One scenario at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: u8,
    pub hp_enabled: bool,
    pub dr_enabled: bool,
    pub p_to_e: f64,
    pub topology: Topology,
    pub pv_area: f64,
    pub bes_per_household: f64,
    pub households: usize,
    pub year: u32,
}

/// Flags of scenario `id`: (heat pump, demand response, P/E).
pub fn scenario_flags(id: u8) -> Result<(bool, bool, f64)> {
    match id {
        1 => Ok((false, false, 1.0)),
        2 => Ok((true, false, 1.0)),
        3 => Ok((false, true, 1.0)),
        4 => Ok((true, true, 1.0)),
        5 => Ok((false, false, 0.5)),
        _ => Err(Error::Config(format!("unknown scenario {id}; expected 1..5"))),
    }
}

pub fn scenario_name(id: u8) -> &'static str {
    match id {
        1 => "base",
        2 => "hp",
        3 => "dr",
        4 => "hp_dr",
        5 => "power_to_energy",
        _ => "unknown",
    }
}

pub fn build_scenario(id: u8, topology: Topology, pv_area: f64, bes_per_household: f64, year: u32) -> Result<ScenarioConfig> {
    let (hp_enabled, dr_enabled, p_to_e) = scenario_flags(id)?;
    if !(pv_area.is_finite() && pv_area >= 0.0) || !(bes_per_household.is_finite() && bes_per_household >= 0.0) {
        return Err(Error::Config("grid point values must be finite and >= 0".into()));
    }
    Ok(ScenarioConfig {
        id,
        hp_enabled,
        dr_enabled,
        p_to_e,
        topology,
        pv_area,
        bes_per_household,
        households: 6,
        year,
    })
}

impl ScenarioConfig {
    pub fn with_households(self, households: usize) -> Self {
        Self { households, ..self }
    }

    pub fn aggregate_capacity(&self) -> f64 {
        self.bes_per_household * self.households as f64
    }

    /// File-name friendly identifier, e.g. `s1_ces_pv15_bes5`.
    pub fn cell_key(&self) -> String {
        format!("s{}_{}_pv{}_bes{}", self.id, self.topology, self.pv_area, self.bes_per_household)
    }

    /// Zero-PV and zero-BES cells are left out of grid means.
    pub fn in_aggregation(&self) -> bool {
        self.pv_area > 0.0 && self.bes_per_household > 0.0
    }
}

/// A household community at one scenario and PV size, and its step-one
/// dispatch without storage.
#[derive(Debug)]
pub struct StageEntry {
    pub community: Community,
    pub stage: ProsumerStage,
}

type StageKey = (bool, bool, u64);
/// (scenario, topology, PV area bits, BES bits, year).
type CellKey = (u8, Topology, u64, u64, u32);
/// (scenario, PV area bits, BES bits).
type OptKey = (u8, u64, u64);

/// Per-key slots: the first caller computes, concurrent callers of the same
/// key wait for it. Errors are not cached.
struct Memo<K, V>(Mutex<HashMap<K, Arc<Mutex<Option<V>>>>>);

impl<K: std::hash::Hash + Eq, V: Clone> Memo<K, V> {
    fn new() -> Self {
        Self(Mutex::new(HashMap::new()))
    }

    fn get_or(&self, key: K, f: impl FnOnce() -> Result<V>) -> Result<V> {
        let slot = self.0.lock().expect("memo lock").entry(key).or_default().clone();
        let mut guard = slot.lock().expect("memo slot lock");
        if let Some(v) = guard.as_ref() {
            return Ok(v.clone());
        }
        let v = f()?;
        *guard = Some(v.clone());
        Ok(v)
    }

    fn clear(&self) {
        self.0.lock().expect("memo lock").clear();
    }
}

/// KPIs of a finished cell; money per household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub kpi: KpiReport,
    /// Community total, kWh.
    pub storage_self_consumption: f64,
}

/// Input data, configuration and cached runs shared by all cells.
pub struct Study {
    pub config: Config,
    pub data: CommunityData,
    stages: Memo<StageKey, Arc<StageEntry>>,
    cells: Memo<CellKey, CellSummary>,
    opts: Memo<OptKey, f64>,
}

/// Finished run of one cell.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub scenario: ScenarioConfig,
    pub result: DispatchResult,
    pub baseline: DispatchResult,
    pub aggregates: EnergyAggregates,
    /// Community totals.
    pub kpi: KpiReport,
}

impl Study {
    pub fn new(config: Config, data: CommunityData) -> Result<Self> {
        config.validate()?;
        if data.households.len() != config.study.households {
            return Err(Error::Config(format!(
                "dataset has {} households, configuration expects {}",
                data.households.len(),
                config.study.households
            )));
        }
        Ok(Self {
            config,
            data,
            stages: Memo::new(),
            cells: Memo::new(),
            opts: Memo::new(),
        })
    }

    /// Loads `study.data_dir`, or synthesises the dataset from `study.seed`.
    pub fn from_config(config: Config) -> Result<Self> {
        let n = config.study.households;
        let data = match &config.study.data_dir {
            Some(dir) => CommunityData::load_dir(dir, n)?,
            None => CommunityData::synthetic(config.study.seed, n)?,
        };
        Self::new(config, data)
    }

    pub fn build(&self, id: u8, topology: Topology, pv_area: f64, bes: f64, year: u32) -> Result<ScenarioConfig> {
        Ok(build_scenario(id, topology, pv_area, bes, year)?.with_households(self.config.study.households))
    }

    pub fn dispatch_params(&self) -> DispatchParams {
        DispatchParams {
            dr_direction: self.config.dr.direction,
            ..self.config.dispatch
        }
    }

    fn bes(&self, capacity: f64, p_to_e: f64) -> Result<BesSpec> {
        self.config.devices.bes.spec(capacity, p_to_e)
    }

    /// The CES of a scenario at full size, `None` without capacity.
    pub fn ces_spec(&self, sc: &ScenarioConfig) -> Result<Option<BesSpec>> {
        if sc.topology != Topology::Ces || sc.aggregate_capacity() <= 0.0 {
            return Ok(None);
        }
        Ok(Some(self.bes(sc.aggregate_capacity(), sc.p_to_e)?))
    }

    /// Dispatch inputs of a scenario; household batteries only for HES.
    pub fn community(&self, sc: &ScenarioConfig) -> Result<Community> {
        let dev = &self.config.devices;
        let pv_spec = PvSpec::new(sc.pv_area, dev.pv_efficiency)?;
        let pv = pv_output(&pv_spec, &self.data.pv_yield)?;
        let share = if sc.dr_enabled { self.config.dr.max_share } else { 0.0 };
        let hes = if sc.topology == Topology::Hes && sc.bes_per_household > 0.0 {
            Some(self.bes(sc.bes_per_household, sc.p_to_e)?)
        } else {
            None
        };
        let households = self
            .data
            .households
            .iter()
            .map(|p| {
                let split = split_shiftable(&p.load, share, self.config.dr.window_hours)?;
                Ok(Household {
                    series: HouseholdSeries {
                        fixed: split.fixed.values().to_vec(),
                        shiftable: split.shiftable.values().to_vec(),
                        heat: p.heat.values().to_vec(),
                        pv: pv.values().to_vec(),
                    },
                    devices: HouseholdDevices {
                        hp: sc.hp_enabled.then_some(dev.hp),
                        ngb: (!sc.hp_enabled).then_some(dev.ngb),
                        hes,
                        dr_window_steps: if sc.dr_enabled { split.dr_window_steps } else { 0 },
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Community {
            households,
            spot: self.data.spot.values().to_vec(),
        })
    }

    /// Step one without any storage, cached per (HP, DR, PV area).
    pub fn base_stage(&self, sc: &ScenarioConfig) -> Result<Arc<StageEntry>> {
        let key = (sc.hp_enabled, sc.dr_enabled, sc.pv_area.to_bits());
        self.stages.get_or(key, || {
            let base = ScenarioConfig {
                topology: Topology::Ces,
                bes_per_household: 0.0,
                ..*sc
            };
            let community = self.community(&base)?;
            let stage = run_prosumers(&community, Topology::Ces, &self.dispatch_params())?;
            Ok(Arc::new(StageEntry { community, stage }))
        })
    }

    /// Drops cached runs.
    pub fn clear_cache(&self) {
        self.stages.clear();
        self.cells.clear();
        self.opts.clear();
    }

    fn baseline(&self, sc: &ScenarioConfig, entry: &StageEntry) -> Result<DispatchResult> {
        let mut params = self.dispatch_params();
        match sc.topology {
            Topology::Hes => {
                let stage = ProsumerStage {
                    topology: Topology::Hes,
                    ..entry.stage.clone()
                };
                assemble(&stage, &entry.community, None, &params)
            }
            Topology::Ces => {
                params.sharing = self.config.assessment.baseline == Baseline::ZeroCapacitySharing;
                assemble(&entry.stage, &entry.community, None, &params)
            }
        }
    }

    /// Annual run of `sc` with its storage, plus the storage-free baseline.
    pub fn run_cell(&self, sc: &ScenarioConfig) -> Result<CellRun> {
        let entry = self.base_stage(sc)?;
        let baseline = self.baseline(sc, &entry)?;
        let params = self.dispatch_params();
        let (result, community) = match sc.topology {
            _ if sc.bes_per_household <= 0.0 => (baseline.clone(), None),
            Topology::Hes => {
                let community = self.community(sc)?;
                let stage = run_prosumers(&community, Topology::Hes, &params)?;
                (assemble(&stage, &community, None, &params)?, Some(community))
            }
            Topology::Ces => {
                let ces = self.ces_spec(sc)?;
                (assemble(&entry.stage, &entry.community, ces.as_ref(), &params)?, None)
            }
        };
        let community = community.as_ref().unwrap_or(&entry.community);
        let aggregates = aggregate(&result, community, self.config.assessment.ur_mode)?;
        let eac = self.eac(sc, sc.aggregate_capacity())?;
        let kpi = KpiReport::new(afb(&result, &baseline)?, eac, &aggregates)?;
        Ok(CellRun {
            scenario: *sc,
            result,
            baseline,
            aggregates,
            kpi,
        })
    }

    /// KPIs of `sc`, cached per cell and year.
    pub fn cell_summary(&self, sc: &ScenarioConfig) -> Result<CellSummary> {
        let key = (sc.id, sc.topology, sc.pv_area.to_bits(), sc.bes_per_household.to_bits(), sc.year);
        self.cells.get_or(key, || {
            let r = self.run_cell(sc)?;
            Ok(CellSummary {
                kpi: per_household(&r.kpi, r.scenario.households),
                storage_self_consumption: r.result.storage_self_consumption(),
            })
        })
    }

    /// Community EAC of `aggregate` kWh at the prices of `sc.year`.
    pub fn eac(&self, sc: &ScenarioConfig, aggregate: f64) -> Result<f64> {
        let inputs = self.config.cost_trend.inputs_for(sc.year, &self.config.cost)?;
        installation_eac(aggregate, sc.households, sc.topology, &inputs)
    }

    /// Capacity sweep of a CES cell (operator re-runs only).
    pub fn ces_sweep<'a>(&self, sc: &ScenarioConfig, entry: &'a StageEntry) -> Result<Option<CapacitySweep<'a>>> {
        let Some(ces) = self.ces_spec(sc)? else {
            return Ok(None);
        };
        let params = DispatchParams {
            arbitrage: self.config.reduction.arbitrage,
            ..self.dispatch_params()
        };
        Ok(Some(CapacitySweep::ces(&entry.stage, &entry.community.spot, ces, params)))
    }

    /// Reduction curve of a CES cell over `fractions` plus every point the
    /// CES_OPT search visited, with CES_OPT and CES_DIR set. `None` without
    /// capacity.
    pub fn ces_reduction(&self, sc: &ScenarioConfig, fractions: &[f64]) -> Result<Option<ReductionCurve>> {
        let entry = self.base_stage(sc)?;
        let Some(sweep) = self.ces_sweep(sc, &entry)? else {
            return Ok(None);
        };
        let red = &self.config.reduction;
        let key = (sc.id, sc.pv_area.to_bits(), sc.bes_per_household.to_bits());
        let opt = self.opts.get_or(key, || find_ces_opt(&sweep, red.tolerance, red.resolution))?;
        let mut curve = sc_vs_capacity(&sweep, fractions)?;
        curve.points = sweep.evaluated()?;
        curve.ces_opt = Some(opt);
        Ok(Some(curve))
    }

    /// CES_OPT of a CES cell; 0 without capacity or PV. Cached per cell.
    pub fn ces_opt(&self, sc: &ScenarioConfig) -> Result<f64> {
        let key = (sc.id, sc.pv_area.to_bits(), sc.bes_per_household.to_bits());
        self.opts.get_or(key, || {
            let entry = self.base_stage(sc)?;
            match self.ces_sweep(sc, &entry)? {
                Some(sweep) => find_ces_opt(&sweep, self.config.reduction.tolerance, self.config.reduction.resolution),
                None => Ok(0.0),
            }
        })
    }
}

/// One cell of a sensitivity grid; money values per household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub pv_area: f64,
    pub bes_per_household: f64,
    pub included: bool,
    pub kpi: Option<KpiReport>,
    /// Stored self-consumption of the community, kWh.
    pub storage_self_consumption: f64,
    pub error: Option<String>,
}

/// Means and coefficients of variation over the included cells.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridSummaries {
    pub afb: Option<GridSummary<f64>>,
    pub eac: Option<GridSummary<f64>>,
    pub eav: Option<GridSummary<f64>>,
    pub ur: Option<GridSummary<f64>>,
    pub ssr: Option<GridSummary<f64>>,
    pub scr_tot: Option<GridSummary<f64>>,
    pub scr_el: Option<GridSummary<f64>>,
    pub scr_hp: Option<GridSummary<f64>>,
    pub scr_storage: Option<GridSummary<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub scenario: u8,
    pub topology: Topology,
    pub year: u32,
    pub pv_areas: Vec<f64>,
    pub bes_sizes: Vec<f64>,
    /// Row-major: PV rows, BES columns.
    pub cells: Vec<GridCell>,
    pub summary: GridSummaries,
}

impl GridResult {
    pub fn cell(&self, pv_idx: usize, bes_idx: usize) -> &GridCell {
        &self.cells[pv_idx * self.bes_sizes.len() + bes_idx]
    }

    pub fn included(&self) -> impl Iterator<Item = &GridCell> {
        self.cells.iter().filter(|c| c.included)
    }

    fn values(&self, f: impl Fn(&KpiReport) -> Option<f64>) -> Vec<f64> {
        self.included().filter_map(|c| c.kpi.as_ref().and_then(&f)).collect()
    }

    fn summarise(&mut self) {
        let s = |v: Vec<f64>| grid_summary(&v).ok();
        self.summary = GridSummaries {
            afb: s(self.values(|k| Some(k.afb_total))),
            eac: s(self.values(|k| Some(k.eac))),
            eav: s(self.values(|k| Some(k.eav))),
            ur: s(self.values(|k| Some(k.ur))),
            ssr: s(self.values(|k| k.ssr)),
            scr_tot: s(self.values(|k| k.scr.map(|x| x.tot))),
            scr_el: s(self.values(|k| k.scr.map(|x| x.el))),
            scr_hp: s(self.values(|k| k.scr.map(|x| x.hp))),
            scr_storage: s(self.values(|k| k.scr.map(|x| x.storage))),
        };
    }

    pub fn failures(&self) -> impl Iterator<Item = &GridCell> {
        self.cells.iter().filter(|c| c.error.is_some())
    }
}

/// Money fields of `k` divided by the number of households.
pub fn per_household(k: &KpiReport, households: usize) -> KpiReport {
    let n = households.max(1) as f64;
    KpiReport {
        afb_eu: k.afb_eu.clone(),
        afb_op: k.afb_op / n,
        afb_total: k.afb_total / n,
        eac: k.eac / n,
        eav: k.eav / n,
        ..k.clone()
    }
}

/// Runs every PV × BES cell of the configured grid in parallel. Failing
/// cells are recorded and the grid continues.
pub fn run_sensitivity_grid(study: &Study, scenario: u8, topology: Topology, year: u32) -> Result<GridResult> {
    scenario_flags(scenario)?;
    let s = &study.config.study;
    let points: Vec<(f64, f64)> = s
        .pv_areas
        .iter()
        .flat_map(|&pv| s.bes_sizes.iter().map(move |&b| (pv, b)))
        .collect();
    let cells: Vec<GridCell> = points
        .par_iter()
        .map(|&(pv, bes)| {
            let cell = |kpi, sc_kwh, error| GridCell {
                pv_area: pv,
                bes_per_household: bes,
                included: pv > 0.0 && bes > 0.0,
                kpi,
                storage_self_consumption: sc_kwh,
                error,
            };
            let run = study
                .build(scenario, topology, pv, bes, year)
                .and_then(|sc| study.cell_summary(&sc));
            match run {
                Ok(r) => cell(Some(r.kpi), r.storage_self_consumption, None),
                Err(e) => {
                    log::warn!("scenario {scenario} {topology} pv {pv} bes {bes}: {e}");
                    cell(None, 0.0, Some(e.to_string()))
                }
            }
        })
        .collect();
    let mut grid = GridResult {
        scenario,
        topology,
        year,
        pv_areas: s.pv_areas.clone(),
        bes_sizes: s.bes_sizes.clone(),
        cells,
        summary: GridSummaries::default(),
    };
    grid.summarise();
    Ok(grid)
}

/// Same grid priced at another year: AFB from the dispatch is kept, EAC
/// and everything derived from it are recomputed.
pub fn reprice(study: &Study, grid: &GridResult, year: u32) -> Result<GridResult> {
    let mut out = grid.clone();
    out.year = year;
    for c in &mut out.cells {
        if let Some(k) = c.kpi.as_mut() {
            let sc = study.build(grid.scenario, grid.topology, c.pv_area, c.bes_per_household, year)?;
            k.eac = study.eac(&sc, sc.aggregate_capacity())? / sc.households as f64;
            k.eav = k.afb_total - k.eac;
        }
    }
    out.summarise();
    Ok(out)
}

/// CES_OPT-sized system of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptCell {
    pub pv_area: f64,
    pub bes_per_household: f64,
    pub ces_opt: f64,
    /// Per household, from the reference-year dispatch of the reduced CES.
    pub afb: f64,
    /// Per household, by year.
    pub eac: Vec<f64>,
    pub coverage: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub scenario: u8,
    pub cells: Vec<OptCell>,
    /// Mean coverage ratio over the cells, by year.
    pub mean_coverage: Vec<f64>,
    pub mean_ces_opt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub years: Vec<u32>,
    pub rows: Vec<CoverageRow>,
}

impl CoverageTable {
    pub fn row(&self, scenario: u8) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.scenario == scenario)
    }
}

/// Coverage of the CES_OPT-sized community storage per scenario and year.
/// Dispatch benefits are held at the reference year; only the investment
/// follows the cost trend.
pub fn invest_assessment(study: &Study, scenarios: &[u8], years: &[u32]) -> Result<CoverageTable> {
    let s = &study.config.study;
    let mut rows = Vec::with_capacity(scenarios.len());
    for &id in scenarios {
        let points: Vec<(f64, f64)> = s
            .pv_areas
            .iter()
            .flat_map(|&pv| s.bes_sizes.iter().map(move |&b| (pv, b)))
            .filter(|(pv, b)| *pv > 0.0 && *b > 0.0)
            .collect();
        let cells = points
            .par_iter()
            .map(|&(pv, bes)| opt_cell(study, id, pv, bes, years))
            .collect::<Result<Vec<_>>>()?;
        let mean_coverage = (0..years.len())
            .map(|y| crate::assessment::mean(&cells.iter().map(|c| c.coverage[y]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        let mean_ces_opt = crate::assessment::mean(&cells.iter().map(|c| c.ces_opt).collect::<Vec<_>>())?;
        rows.push(CoverageRow {
            scenario: id,
            cells,
            mean_coverage,
            mean_ces_opt,
        });
    }
    Ok(CoverageTable {
        years: years.to_vec(),
        rows,
    })
}

fn opt_cell(study: &Study, id: u8, pv: f64, bes: f64, years: &[u32]) -> Result<OptCell> {
    let reference = study.config.study.reference_year;
    let sc = study.build(id, Topology::Ces, pv, bes, reference)?;
    let ces_opt = study.ces_opt(&sc)?;
    let reduced = ScenarioConfig {
        bes_per_household: bes * (1.0 - ces_opt),
        ..sc
    };
    let n = sc.households as f64;
    let afb_total = if reduced.bes_per_household > 0.0 {
        study.cell_summary(&reduced)?.kpi.afb_total
    } else {
        0.0
    };
    let mut eac = Vec::with_capacity(years.len());
    let mut coverage = Vec::with_capacity(years.len());
    for &y in years {
        let priced = ScenarioConfig { year: y, ..reduced };
        let e = study.eac(&priced, priced.aggregate_capacity())? / n;
        coverage.push(if e > 0.0 { coverage_ratio(afb_total, e)? } else { 0.0 });
        eac.push(e);
    }
    Ok(OptCell {
        pv_area: pv,
        bes_per_household: bes,
        ces_opt,
        afb: afb_total,
        eac,
        coverage,
    })
}
