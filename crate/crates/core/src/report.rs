//! CSV tables, KPI JSON and SVG line plots.
//!
//! Every CSV is produced from serialisable results only, so re-emitting from
//! a saved KPI JSON gives byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assessment::{GridSummary, KpiReport};
use crate::dispatch::DispatchResult;
use crate::reduction::{DurationCurve, ReductionCurve};
use crate::scenarios::{CoverageTable, GridResult};
use crate::{Error, Result};

/// Cell value shown in a grid table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Afb,
    AfbOp,
    Eac,
    Eav,
    Ur,
    Ssr,
    ScrTot,
    ScrStorage,
}

impl Metric {
    pub const TABLES: [Metric; 4] = [Metric::Afb, Metric::Eac, Metric::Eav, Metric::Ur];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Afb => "afb",
            Metric::AfbOp => "afb_op",
            Metric::Eac => "eac",
            Metric::Eav => "eav",
            Metric::Ur => "ur",
            Metric::Ssr => "ssr",
            Metric::ScrTot => "scr_tot",
            Metric::ScrStorage => "scr_storage",
        }
    }

    pub fn value(self, k: &KpiReport) -> Option<f64> {
        match self {
            Metric::Afb => Some(k.afb_total),
            Metric::AfbOp => Some(k.afb_op),
            Metric::Eac => Some(k.eac),
            Metric::Eav => Some(k.eav),
            Metric::Ur => Some(k.ur),
            Metric::Ssr => k.ssr,
            Metric::ScrTot => k.scr.map(|s| s.tot),
            Metric::ScrStorage => k.scr.map(|s| s.storage),
        }
    }

    fn decimals(self) -> usize {
        match self {
            Metric::Afb | Metric::AfbOp | Metric::Eac | Metric::Eav => 2,
            _ => 4,
        }
    }
}

fn num(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    // No negative zero in the tables.
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// PV rows × BES columns of one metric (per household for money).
pub fn grid_table_csv(grid: &GridResult, metric: Metric) -> String {
    let mut out = String::from("pv_area_m2");
    for b in &grid.bes_sizes {
        let _ = write!(out, ",bes_{b}");
    }
    out.push('\n');
    for (i, pv) in grid.pv_areas.iter().enumerate() {
        let _ = write!(out, "{pv}");
        for j in 0..grid.bes_sizes.len() {
            out.push(',');
            if let Some(v) = grid.cell(i, j).kpi.as_ref().and_then(|k| metric.value(k)) {
                out.push_str(&num(v, metric.decimals()));
            }
        }
        out.push('\n');
    }
    out
}

/// Mean and CV of every summarised metric, one line per grid and metric.
pub fn summary_csv(grids: &[GridResult]) -> String {
    let mut out = String::from("scenario,topology,year,metric,mean,cv\n");
    for g in grids {
        let s = &g.summary;
        let rows: [(&str, Option<GridSummary<f64>>); 9] = [
            ("afb", s.afb),
            ("eac", s.eac),
            ("eav", s.eav),
            ("ur", s.ur),
            ("ssr", s.ssr),
            ("scr_tot", s.scr_tot),
            ("scr_el", s.scr_el),
            ("scr_hp", s.scr_hp),
            ("scr_storage", s.scr_storage),
        ];
        for (name, v) in rows {
            let (m, c) = v.map_or((String::new(), String::new()), |v| (num(v.mean, 4), num(v.cv, 4)));
            let _ = writeln!(out, "{},{},{},{name},{m},{c}", g.scenario, g.topology, g.year);
        }
    }
    out
}

/// Mean CES_OPT and coverage per scenario and year.
pub fn coverage_csv(table: &CoverageTable) -> String {
    let mut out = String::from("scenario,mean_ces_opt");
    for y in &table.years {
        let _ = write!(out, ",coverage_{y}");
    }
    out.push('\n');
    for r in &table.rows {
        let _ = write!(out, "{},{}", r.scenario, num(r.mean_ces_opt, 4));
        for c in &r.mean_coverage {
            let _ = write!(out, ",{}", num(*c, 4));
        }
        out.push('\n');
    }
    out
}

/// Per-cell CES_OPT, AFB, EAC and coverage of the investment assessment.
pub fn coverage_cells_csv(table: &CoverageTable) -> String {
    let mut out = String::from("scenario,pv_area_m2,bes_kwh,ces_opt,afb");
    for y in &table.years {
        let _ = write!(out, ",eac_{y},coverage_{y}");
    }
    out.push('\n');
    for r in &table.rows {
        for c in &r.cells {
            let _ = write!(out, "{},{},{},{},{}", r.scenario, c.pv_area, c.bes_per_household, num(c.ces_opt, 4), num(c.afb, 2));
            for (e, k) in c.eac.iter().zip(&c.coverage) {
                let _ = write!(out, ",{},{}", num(*e, 2), num(*k, 4));
            }
            out.push('\n');
        }
    }
    out
}

/// Dispatch flows per step: every household flow, then the operator.
pub fn flows_csv(result: &DispatchResult) -> String {
    const NAMES: [&str; 13] = [
        "pv_to_load",
        "pv_to_hp",
        "pv_to_storage",
        "pv_to_grid",
        "grid_to_load",
        "grid_to_hp",
        "storage_to_load",
        "storage_to_hp",
        "dr_out",
        "dr_in",
        "hp_heat",
        "ngb_heat",
        "soc",
    ];
    const OP_NAMES: [&str; 7] = [
        "direct_share",
        "community_charge",
        "community_discharge",
        "spot_buy_to_ces",
        "ces_to_spot",
        "soc_community",
        "soc_operator",
    ];
    let mut out = String::from("step");
    for h in 0..result.households.len() {
        for n in NAMES {
            let _ = write!(out, ",h{}_{n}", h + 1);
        }
    }
    if result.operator.is_some() {
        for n in OP_NAMES {
            let _ = write!(out, ",ces_{n}");
        }
    }
    out.push('\n');
    for t in 0..result.steps() {
        let _ = write!(out, "{t}");
        for f in &result.households {
            let cols = [
                &f.pv_to_load,
                &f.pv_to_hp,
                &f.pv_to_storage,
                &f.pv_to_grid,
                &f.grid_to_load,
                &f.grid_to_hp,
                &f.storage_to_load,
                &f.storage_to_hp,
                &f.dr_out,
                &f.dr_in,
                &f.hp_heat,
                &f.ngb_heat,
                &f.soc,
            ];
            for c in cols {
                out.push(',');
                out.push_str(&num(c.get(t).copied().unwrap_or(0.0), 6));
            }
        }
        if let Some(o) = &result.operator {
            for c in [
                &o.direct_share,
                &o.community_charge,
                &o.community_discharge,
                &o.spot_buy_to_ces,
                &o.ces_to_spot,
                &o.soc_community,
                &o.soc_operator,
            ] {
                out.push(',');
                out.push_str(&num(c[t], 6));
            }
        }
        out.push('\n');
    }
    out
}

/// Relative SOC by rank; one column per storage.
pub fn duration_curves_csv(curves: &[DurationCurve]) -> String {
    let mut out = String::from("rank");
    for c in curves {
        let _ = write!(out, ",{}", storage_label(c));
    }
    out.push('\n');
    let n = curves.iter().map(|c| c.values.len()).max().unwrap_or(0);
    for t in 0..n {
        let _ = write!(out, "{t}");
        for c in curves {
            out.push(',');
            if let Some(v) = c.values.get(t) {
                out.push_str(&num(*v, 6));
            }
        }
        out.push('\n');
    }
    out
}

fn storage_label(c: &DurationCurve) -> String {
    match c.source {
        crate::dispatch::StorageId::Ces => "ces".into(),
        crate::dispatch::StorageId::Hes(h) => format!("hes_{h}"),
    }
}

pub fn reduction_curve_csv(curve: &ReductionCurve) -> String {
    let mut out = String::from("capacity_quotient,sc_quotient\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{}", num(p.capacity_quotient, 4), num(p.sc_quotient, 6));
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Reads a grid written by [`write_grid`].
pub fn read_grid_json(path: &Path) -> Result<GridResult> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        row: e.line(),
        message: e.to_string(),
    })
}

/// File stem of a grid, e.g. `s1_ces_2015`.
pub fn grid_stem(grid: &GridResult) -> String {
    format!("s{}_{}_{}", grid.scenario, grid.topology, grid.year)
}

pub fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

/// KPI JSON plus one CSV per table metric. Returns the written paths.
pub fn write_grid(dir: &Path, grid: &GridResult) -> Result<Vec<PathBuf>> {
    let stem = grid_stem(grid);
    let mut paths = vec![write_file(&dir.join(format!("{stem}_kpi.json")), &to_json(grid)?)?];
    paths.extend(write_grid_tables(dir, grid)?);
    Ok(paths)
}

pub fn write_grid_tables(dir: &Path, grid: &GridResult) -> Result<Vec<PathBuf>> {
    let stem = grid_stem(grid);
    Metric::TABLES
        .iter()
        .map(|m| write_file(&dir.join(format!("{stem}_{}.csv", m.name())), &grid_table_csv(grid, *m)))
        .collect()
}

/// One labelled polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Minimal SVG line chart with axes ranges taken from the data.
pub fn svg_line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(out, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(out, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 10.0, escape(x_label));
    let _ = writeln!(out, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{}</text>"#, h / 2.0, h / 2.0, escape(y_label));
    for (v, anchor, x, y) in [
        (x0, "start", m, h - m + 15.0),
        (x1, "end", w - m, h - m + 15.0),
        (y0, "end", m - 5.0, h - m),
        (y1, "end", m - 5.0, m + 4.0),
    ] {
        let _ = writeln!(out, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{}</text>"#, tick(v));
    }
    for (k, s) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = m + 15.0 * k as f64;
        let _ = writeln!(out, r#"<text x="{}" y="{ly}" fill="{colour}" text-anchor="end">{}</text>"#, w - m, escape(&s.label));
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Duration curves as a plot over the fraction of the year.
pub fn duration_curves_svg(curves: &[DurationCurve]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|c| {
            let n = c.values.len().max(1) as f64;
            // Thin out to keep the file small.
            let stride = (c.values.len() / 500).max(1);
            let mut points: Vec<(f64, f64)> = c.values.iter().enumerate().step_by(stride).map(|(t, v)| (t as f64 / n, *v)).collect();
            if let Some(last) = c.values.last() {
                points.push((1.0, *last));
            }
            Series {
                label: storage_label(c),
                points,
            }
        })
        .collect();
    svg_line_plot("SOC duration curve", "share of steps", "relative SOC", &series)
}

pub fn reduction_curves_svg(curves: &[(String, &ReductionCurve)]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|(label, c)| Series {
            label: label.clone(),
            points: c.points.iter().map(|p| (p.capacity_quotient, p.sc_quotient)).collect(),
        })
        .collect();
    svg_line_plot("Stored self-consumption against capacity", "capacity quotient", "SC quotient", &series)
}
