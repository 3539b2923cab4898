use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use ces_opt::config::{load_config, Config};
use ces_opt::dispatch::StorageId;
use ces_opt::profiles::CommunityData;
use ces_opt::reduction::{sc_vs_capacity, soc_duration_curve, CapacitySweep, ReductionCurve};
use ces_opt::report;
use ces_opt::scenarios::{invest_assessment, per_household, reprice, run_sensitivity_grid, GridResult, Study};
use ces_opt::{Error, Topology};

#[derive(Parser)]
#[command(name = "ces-opt", version, about = "Household versus community battery storage study")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dispatch one scenario cell and write its flows and KPIs.
    Run(Common),
    /// PV × BES sensitivity grid with AFB/EAC/EAV/UR tables and summaries.
    Sweep(Common),
    /// Duration curves, capacity reduction curve, CES_OPT and CES_DIR.
    Reduce(Common),
    /// Coverage of the reduced community storage over the cost trend years.
    Invest(Common),
    /// Write the synthetic input dataset as CSV.
    Synth(Common),
    /// Re-emit the tables of a saved KPI JSON.
    Tables {
        /// `*_kpi.json` written by `sweep`.
        #[arg(long)]
        kpi: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory with load/heat/pv_yield/spot CSVs; synthetic data otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<u8>,
    #[arg(long)]
    topology: Option<Topology>,
    #[arg(long)]
    pv: Option<f64>,
    #[arg(long)]
    bes: Option<f64>,
    /// Comma-separated cost years, e.g. 2015,2025,2035.
    #[arg(long, value_delimiter = ',')]
    years: Option<Vec<u32>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "CES_OPT_JOBS")]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<Config, Error> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => Config::default(),
        };
        let s = &mut cfg.study;
        if let Some(d) = &self.data {
            s.data_dir = Some(d.clone());
        }
        if let Some(id) = self.scenario {
            s.scenarios = vec![id];
        }
        if let Some(t) = self.topology {
            s.topologies = vec![t];
        }
        if let Some(pv) = self.pv {
            s.pv_areas = vec![pv];
        }
        if let Some(b) = self.bes {
            s.bes_sizes = vec![b];
        }
        if let Some(y) = &self.years {
            s.years = y.clone();
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn study(&self) -> anyhow::Result<Study> {
        Ok(Study::from_config(self.config()?)?)
    }

    /// The single cell selected by the flags, falling back to the first
    /// configured value.
    fn cell(&self, cfg: &Config) -> anyhow::Result<(u8, Topology, f64, f64)> {
        let s = &cfg.study;
        let first = |v: Option<f64>, all: &[f64], what: &str| {
            v.or_else(|| all.iter().copied().find(|x| *x > 0.0))
                .ok_or_else(|| Error::Config(format!("no {what} selected")))
        };
        Ok((
            self.scenario.or(s.scenarios.first().copied()).ok_or_else(|| Error::Config("no scenario selected".into()))?,
            self.topology.or(s.topologies.first().copied()).unwrap_or(Topology::Ces),
            first(self.pv, &s.pv_areas, "PV area")?,
            first(self.bes, &s.bes_sizes, "BES size")?,
        ))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Config(_)) => 2,
        Some(Error::Io { .. } | Error::Data { .. } | Error::Series(_) | Error::UnitMismatch { .. }) => 3,
        Some(Error::Infeasible { .. } | Error::Solver { .. }) => 4,
        _ => 1,
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    if let Command::Tables { kpi, out } = &cli.command {
        let grid = report::read_grid_json(kpi)?;
        for p in report::write_grid_tables(out, &grid)? {
            println!("{}", p.display());
        }
        return Ok(());
    }
    let common = match &cli.command {
        Command::Run(c) | Command::Sweep(c) | Command::Reduce(c) | Command::Invest(c) | Command::Synth(c) => c,
        Command::Tables { .. } => unreachable!(),
    };
    if let Some(n) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("setting up the worker pool")?;
    }
    let written = match &cli.command {
        Command::Run(c) => cmd_run(c)?,
        Command::Sweep(c) => cmd_sweep(c)?,
        Command::Reduce(c) => cmd_reduce(c)?,
        Command::Invest(c) => cmd_invest(c)?,
        Command::Synth(c) => cmd_synth(c)?,
        Command::Tables { .. } => unreachable!(),
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_run(c: &Common) -> anyhow::Result<Vec<PathBuf>> {
    let study = c.study()?;
    let (id, topo, pv, bes) = c.cell(&study.config)?;
    let year = study.config.study.reference_year;
    let sc = study.build(id, topo, pv, bes, year)?;
    let run = study.run_cell(&sc)?;
    let key = sc.cell_key();
    let kpi = serde_json::json!({
        "scenario": sc,
        "households": sc.households,
        "community": run.kpi,
        "per_household": per_household(&run.kpi, sc.households),
        "storage_self_consumption_kwh": run.result.storage_self_consumption(),
    });
    let out = &c.out;
    Ok(vec![
        report::write_file(&out.join(format!("{key}_kpi.json")), &report::to_json(&kpi)?)?,
        report::write_file(&out.join(format!("{key}_flows.csv")), &report::flows_csv(&run.result))?,
    ])
}

fn cmd_sweep(c: &Common) -> anyhow::Result<Vec<PathBuf>> {
    let study = c.study()?;
    let s = study.config.study.clone();
    let mut grids: Vec<GridResult> = Vec::new();
    let mut written = Vec::new();
    for &id in &s.scenarios {
        for &topo in &s.topologies {
            let base = run_sensitivity_grid(&study, id, topo, s.reference_year)?;
            for f in base.failures() {
                log::warn!("cell pv {} bes {} failed: {}", f.pv_area, f.bes_per_household, f.error.as_deref().unwrap_or(""));
            }
            for &y in &s.years {
                let g = if y == s.reference_year { base.clone() } else { reprice(&study, &base, y)? };
                written.extend(report::write_grid(&c.out, &g)?);
                grids.push(g);
            }
            if !s.years.contains(&s.reference_year) {
                written.extend(report::write_grid(&c.out, &base)?);
                grids.push(base);
            }
        }
    }
    written.push(report::write_file(&c.out.join("summary.csv"), &report::summary_csv(&grids))?);
    if s.years.len() > 1 {
        written.push(report::write_file(&c.out.join("coverage.csv"), &grid_coverage_csv(&grids))?);
    }
    Ok(written)
}

/// Mean AFB over mean EAC of every full-size grid, by year.
fn grid_coverage_csv(grids: &[GridResult]) -> String {
    let mut out = String::from("scenario,topology,year,coverage\n");
    for g in grids {
        let cov = match (g.summary.afb, g.summary.eac) {
            (Some(a), Some(e)) if e.mean != 0.0 => format!("{:.4}", a.mean / e.mean),
            _ => String::new(),
        };
        out.push_str(&format!("{},{},{},{cov}\n", g.scenario, g.topology, g.year));
    }
    out
}

const REDUCTION_FRACTIONS: [f64; 19] = [
    0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95,
];

fn cmd_reduce(c: &Common) -> anyhow::Result<Vec<PathBuf>> {
    let study = c.study()?;
    let (id, _, pv, bes) = c.cell(&study.config)?;
    if c.topology == Some(Topology::Hes) {
        return Err(Error::Config("reduce needs the CES topology".into()).into());
    }
    let year = study.config.study.reference_year;
    let ces_sc = study.build(id, Topology::Ces, pv, bes, year)?;
    let hes_sc = study.build(id, Topology::Hes, pv, bes, year)?;
    let key = ces_sc.cell_key();
    let out = &c.out;
    let mut written = Vec::new();

    let ces_run = study.run_cell(&ces_sc)?;
    let hes_run = study.run_cell(&hes_sc)?;
    let mut curves = Vec::new();
    if ces_run.result.ces_capacity > 0.0 {
        curves.push(soc_duration_curve(&ces_run.result, StorageId::Ces)?);
    }
    for id in hes_run.result.storage_ids() {
        curves.push(soc_duration_curve(&hes_run.result, id)?);
    }
    written.push(report::write_file(&out.join(format!("{key}_duration.csv")), &report::duration_curves_csv(&curves))?);
    written.push(report::write_file(&out.join(format!("{key}_duration.svg")), &report::duration_curves_svg(&curves))?);

    let red = &study.config.reduction;
    let mut labelled: Vec<(String, ReductionCurve)> = Vec::new();
    if let Some(curve) = study.ces_reduction(&ces_sc, &REDUCTION_FRACTIONS)? {
        labelled.push(("ces".into(), curve));
    }
    let hes_community = study.community(&hes_sc)?;
    let hes_params = ces_opt::dispatch::DispatchParams {
        arbitrage: red.arbitrage,
        ..study.dispatch_params()
    };
    if hes_community.households.iter().any(|h| h.devices.hes.is_some()) {
        let sweep = CapacitySweep::hes(&hes_community, hes_params);
        match sc_vs_capacity(&sweep, &REDUCTION_FRACTIONS) {
            Ok(curve) => labelled.push(("hes".into(), curve)),
            Err(Error::Undefined(m)) => log::warn!("HES reduction curve skipped: {m}"),
            Err(e) => return Err(e.into()),
        }
    }
    for (label, curve) in &labelled {
        let stem = format!("{key}_reduction_{label}");
        written.push(report::write_file(&out.join(format!("{stem}.csv")), &report::reduction_curve_csv(curve))?);
        written.push(report::write_file(&out.join(format!("{stem}.json")), &report::to_json(curve)?)?);
    }
    let refs: Vec<(String, &ReductionCurve)> = labelled.iter().map(|(l, c)| (l.clone(), c)).collect();
    written.push(report::write_file(&out.join(format!("{key}_reduction.svg")), &report::reduction_curves_svg(&refs))?);
    Ok(written)
}

fn cmd_invest(c: &Common) -> anyhow::Result<Vec<PathBuf>> {
    let study = c.study()?;
    let s = study.config.study.clone();
    let table = invest_assessment(&study, &s.scenarios, &s.years)?;
    let out = &c.out;
    Ok(vec![
        report::write_file(&out.join("coverage.csv"), &report::coverage_csv(&table))?,
        report::write_file(&out.join("coverage_cells.csv"), &report::coverage_cells_csv(&table))?,
        report::write_file(&out.join("coverage.json"), &report::to_json(&table)?)?,
    ])
}

fn cmd_synth(c: &Common) -> anyhow::Result<Vec<PathBuf>> {
    let cfg = c.config()?;
    let data = CommunityData::synthetic(cfg.study.seed, cfg.study.households)?;
    data.write_dir(&c.out)?;
    Ok(vec![c.out.clone()])
}
