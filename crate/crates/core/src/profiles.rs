//! Quarter-hourly time series: CSV ingestion, validation, load splitting and
//! the seeded synthetic community dataset.
//!
//! CSV files have a `timestamp,value` header, ISO-8601 local timestamps at a
//! strict 15 minute cadence and one value per row.

use std::fmt;
use std::fs::File;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, STEPS_PER_DAY, STEPS_PER_YEAR, STEP_HOURS};

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Carrier/unit tag of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "kWh_el")]
    KwhEl,
    #[serde(rename = "kWh_th")]
    KwhTh,
    #[serde(rename = "kWh_fuel")]
    KwhFuel,
    #[serde(rename = "EUR_per_kWh")]
    EurPerKwh,
    /// PV generation potential per m² of module area.
    #[serde(rename = "kWh_per_m2")]
    KwhPerM2,
}

impl Unit {
    /// Prices may be negative; every other carrier is an energy quantity.
    pub fn allows_negative(self) -> bool {
        matches!(self, Unit::EurPerKwh)
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::KwhEl => "kWh_el",
            Unit::KwhTh => "kWh_th",
            Unit::KwhFuel => "kWh_fuel",
            Unit::EurPerKwh => "EUR_per_kWh",
            Unit::KwhPerM2 => "kWh_per_m2",
        };
        f.write_str(s)
    }
}

/// Fixed 15 minute resolution series anchored at a local calendar timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterHourSeries {
    start: NaiveDateTime,
    values: Vec<f64>,
    unit: Unit,
}

impl QuarterHourSeries {
    pub const STEP_MINUTES: i64 = 15;

    /// Builds a series, checking length (a positive multiple of one day),
    /// finiteness and sign.
    pub fn new(start: NaiveDateTime, values: Vec<f64>, unit: Unit) -> Result<Self> {
        if values.is_empty() || !values.len().is_multiple_of(STEPS_PER_DAY) {
            return Err(Error::Series(format!(
                "length {} is not a positive multiple of {STEPS_PER_DAY}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Series(format!("non-finite value at step {i}")));
        }
        if !unit.allows_negative() {
            if let Some(i) = values.iter().position(|&v| v < 0.0) {
                return Err(Error::Series(format!(
                    "negative {unit} value {} at step {i}",
                    values[i]
                )));
            }
        }
        Ok(Self {
            start,
            values,
            unit,
        })
    }

    /// Like [`QuarterHourSeries::new`] but additionally requires a full year.
    pub fn annual(start: NaiveDateTime, values: Vec<f64>, unit: Unit) -> Result<Self> {
        if values.len() != STEPS_PER_YEAR {
            return Err(Error::Series(format!(
                "annual series must have {STEPS_PER_YEAR} steps, got {}",
                values.len()
            )));
        }
        Self::new(start, values, unit)
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn step_minutes(&self) -> i64 {
        Self::STEP_MINUTES
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_annual(&self) -> bool {
        self.values.len() == STEPS_PER_YEAR
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn timestamp(&self, step: usize) -> NaiveDateTime {
        self.start + Duration::minutes(Self::STEP_MINUTES * step as i64)
    }

    /// Same anchor and unit, new values (validated).
    pub fn with_values(&self, values: Vec<f64>, unit: Unit) -> Result<Self> {
        Self::new(self.start, values, unit)
    }

    pub fn scaled(&self, factor: f64, unit: Unit) -> Result<Self> {
        self.with_values(self.values.iter().map(|v| v * factor).collect(), unit)
    }
}

/// Reads a `timestamp,value` CSV at strict 15 minute cadence.
pub fn load_series(path: impl AsRef<Path>, unit: Unit) -> Result<QuarterHourSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);

    let data_err = |row: usize, message: String| Error::Data {
        path: path.to_path_buf(),
        row,
        message,
    };

    let headers = reader
        .headers()
        .map_err(|e| data_err(0, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "value" {
        return Err(data_err(0, format!("expected header `timestamp,value`, got {headers:?}")));
    }

    let mut start = None;
    let mut previous: Option<NaiveDateTime> = None;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| data_err(row, e.to_string()))?;
        if record.len() != 2 {
            return Err(data_err(row, format!("expected 2 columns, got {}", record.len())));
        }
        let ts = parse_timestamp(&record[0])
            .ok_or_else(|| data_err(row, format!("unparseable timestamp `{}`", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| data_err(row, format!("unparseable value `{}`", &record[1])))?;
        if !value.is_finite() {
            return Err(data_err(row, "non-finite value".into()));
        }
        if value < 0.0 && !unit.allows_negative() {
            return Err(data_err(row, format!("negative {unit} value {value}")));
        }
        if let Some(prev) = previous {
            if ts < prev {
                return Err(data_err(row, format!("non-monotone timestamp {ts} after {prev}")));
            }
            let expected = prev + Duration::minutes(QuarterHourSeries::STEP_MINUTES);
            if ts != expected {
                return Err(data_err(
                    row,
                    format!("cadence violation: expected {expected}, got {ts}"),
                ));
            }
        } else {
            start = Some(ts);
        }
        previous = Some(ts);
        values.push(value);
    }

    let start = start.ok_or_else(|| data_err(0, "no data rows".into()))?;
    QuarterHourSeries::new(start, values, unit).map_err(|e| data_err(0, e.to_string()))
}

/// [`load_series`] for a series declared annual (exactly 35,040 rows).
pub fn load_annual_series(path: impl AsRef<Path>, unit: Unit) -> Result<QuarterHourSeries> {
    let path = path.as_ref();
    let series = load_series(path, unit)?;
    if !series.is_annual() {
        return Err(Error::Data {
            path: path.to_path_buf(),
            row: series.len(),
            message: format!(
                "annual series must have {STEPS_PER_YEAR} rows, got {}",
                series.len()
            ),
        });
    }
    Ok(series)
}

/// Writes `timestamp,value` rows; values use shortest round-trip formatting.
pub fn write_series(series: &QuarterHourSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let io = |e: csv::Error| Error::io(path, e.into());
    writer.write_record(["timestamp", "value"]).map_err(io)?;
    for (i, v) in series.values.iter().enumerate() {
        let ts = series.timestamp(i).format(TIMESTAMP_FORMAT).to_string();
        writer.write_record([ts, v.to_string()]).map_err(io)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
}

/// Electrical load split into a fixed part and a shiftable part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSplit {
    pub fixed: QuarterHourSeries,
    pub shiftable: QuarterHourSeries,
    pub dr_max_share: f64,
    pub dr_window_steps: usize,
}

impl LoadSplit {
    /// `fixed[t] + shiftable[t]`.
    pub fn total(&self) -> Vec<f64> {
        self.fixed
            .values()
            .iter()
            .zip(self.shiftable.values())
            .map(|(f, s)| f + s)
            .collect()
    }
}

/// Splits `load` per step: `shiftable[t] = share · load[t]`.
///
/// The shiftable share applies per time step, not to a daily aggregate.
pub fn split_shiftable(
    load: &QuarterHourSeries,
    dr_max_share: f64,
    dr_window_hours: f64,
) -> Result<LoadSplit> {
    if !(0.0..=1.0).contains(&dr_max_share) {
        return Err(Error::InvalidArgument(format!(
            "dr_max_share {dr_max_share} outside [0, 1]"
        )));
    }
    if !(dr_window_hours > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dr_window_hours {dr_window_hours} must be positive"
        )));
    }
    if load.unit() != Unit::KwhEl {
        return Err(Error::UnitMismatch {
            expected: Unit::KwhEl.to_string(),
            actual: load.unit().to_string(),
        });
    }
    let shiftable: Vec<f64> = load.values().iter().map(|v| dr_max_share * v).collect();
    let fixed: Vec<f64> = load
        .values()
        .iter()
        .zip(&shiftable)
        .map(|(v, s)| v - s)
        .collect();
    Ok(LoadSplit {
        fixed: load.with_values(fixed, Unit::KwhEl)?,
        shiftable: load.with_values(shiftable, Unit::KwhEl)?,
        dr_max_share,
        dr_window_steps: (dr_window_hours / STEP_HOURS).round() as usize,
    })
}

/// Annual electrical and thermal demand of one household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdProfile {
    pub load: QuarterHourSeries,
    pub heat: QuarterHourSeries,
}

/// All annual inputs of a community: per-household demand, PV potential per
/// m² (shared by all households) and spot prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityData {
    pub households: Vec<HouseholdProfile>,
    pub pv_yield: QuarterHourSeries,
    pub spot: QuarterHourSeries,
}

impl CommunityData {
    /// The bundled synthetic dataset for `seed`.
    pub fn synthetic(seed: u64, households: usize) -> Result<Self> {
        synth_profiles(seed, households)
    }

    pub fn load_file_name(household: usize) -> String {
        format!("load_{}.csv", household + 1)
    }

    pub fn heat_file_name(household: usize) -> String {
        format!("heat_{}.csv", household + 1)
    }

    /// Reads `load_<i>.csv`, `heat_<i>.csv` (i = 1..n), `pv_yield.csv` and
    /// `spot.csv` from `dir`. All series must be annual.
    pub fn load_dir(dir: impl AsRef<Path>, households: usize) -> Result<Self> {
        let dir = dir.as_ref();
        let mut profiles = Vec::with_capacity(households);
        for h in 0..households {
            profiles.push(HouseholdProfile {
                load: load_annual_series(dir.join(Self::load_file_name(h)), Unit::KwhEl)?,
                heat: load_annual_series(dir.join(Self::heat_file_name(h)), Unit::KwhTh)?,
            });
        }
        Ok(Self {
            households: profiles,
            pv_yield: load_annual_series(dir.join("pv_yield.csv"), Unit::KwhPerM2)?,
            spot: load_annual_series(dir.join("spot.csv"), Unit::EurPerKwh)?,
        })
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (h, p) in self.households.iter().enumerate() {
            write_series(&p.load, dir.join(Self::load_file_name(h)))?;
            write_series(&p.heat, dir.join(Self::heat_file_name(h)))?;
        }
        write_series(&self.pv_yield, dir.join("pv_yield.csv"))?;
        write_series(&self.spot, dir.join("spot.csv"))
    }
}

/// Annual electrical demand band per household (kWh_el).
pub const LOAD_BAND: (f64, f64) = (2_900.0, 4_500.0);
/// Annual heat demand band per household (kWh_th).
pub const HEAT_BAND: (f64, f64) = (15_300.0, 18_300.0);
/// Annual PV potential of the synthetic dataset (kWh per m² of module).
pub const SYNTH_PV_YIELD_PER_M2: f64 = 900.0;
/// Mean spot price of the synthetic dataset (€/kWh).
pub const SYNTH_SPOT_MEAN: f64 = 0.0316;
/// Largest heat demand per step the generator emits: below 9 kW_th for 15 min.
pub const SYNTH_HEAT_STEP_CAP: f64 = 2.1;

fn synth_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2015, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

/// Deterministic synthetic community for `seed`.
///
/// Loads and heat demands are heterogeneous across households (individual
/// peak times, appliance events and noise) so that pooled storage sees
/// complementary surplus and deficit. Annual sums land strictly inside
/// [`LOAD_BAND`] and [`HEAT_BAND`].
pub fn synth_profiles(seed: u64, households: usize) -> Result<CommunityData> {
    if households == 0 {
        return Err(Error::InvalidArgument("households must be >= 1".into()));
    }
    let start = synth_start();
    let weather = Weather::generate(seed);

    let pv_yield = QuarterHourSeries::annual(start, synth_pv(&weather), Unit::KwhPerM2)?;
    let spot = QuarterHourSeries::annual(start, synth_spot(seed, &weather), Unit::EurPerKwh)?;

    let mut profiles = Vec::with_capacity(households);
    for h in 0..households {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 + h as u64);
        let load_target = rng.gen_range(LOAD_BAND.0 + 50.0..LOAD_BAND.1 - 50.0);
        let heat_target = rng.gen_range(HEAT_BAND.0 + 100.0..HEAT_BAND.1 - 100.0);
        let load = synth_load(&mut rng, load_target);
        let heat = synth_heat(&mut rng, &weather, heat_target);
        profiles.push(HouseholdProfile {
            load: QuarterHourSeries::annual(start, load, Unit::KwhEl)?,
            heat: QuarterHourSeries::annual(start, heat, Unit::KwhTh)?,
        });
    }
    Ok(CommunityData {
        households: profiles,
        pv_yield,
        spot,
    })
}

/// Day-level weather shared by all households.
struct Weather {
    /// Daily clearness index in (0, 1].
    clearness: Vec<f64>,
    /// Daily mean outdoor temperature (°C).
    temperature: Vec<f64>,
}

impl Weather {
    fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let noise = Normal::new(0.0, 1.0).expect("valid normal");
        let days = STEPS_PER_YEAR / STEPS_PER_DAY;
        let mut clearness = Vec::with_capacity(days);
        let mut temperature = Vec::with_capacity(days);
        let (mut cloud, mut temp_dev) = (0.0f64, 0.0f64);
        for d in 0..days {
            let season = (2.0 * std::f64::consts::PI * (d as f64 - 172.0) / 365.0).cos();
            cloud = 0.6 * cloud + 0.8 * noise.sample(&mut rng);
            // Summer days are clearer on average.
            let k = 0.55 + 0.15 * season + 0.22 * cloud;
            clearness.push(k.clamp(0.08, 1.0));
            temp_dev = 0.75 * temp_dev + 1.6 * noise.sample(&mut rng);
            temperature.push((9.5 + 9.0 * season + temp_dev).max(-6.0));
        }
        Self {
            clearness,
            temperature,
        }
    }
}

fn day_of(step: usize) -> usize {
    step / STEPS_PER_DAY
}

/// Hour of day at the middle of `step`.
fn hour_of(step: usize) -> f64 {
    (step % STEPS_PER_DAY) as f64 * STEP_HOURS + 0.5 * STEP_HOURS
}

fn is_weekend(step: usize) -> bool {
    let date = synth_start() + Duration::minutes(15 * step as i64);
    date.weekday().number_from_monday() >= 6
}

fn bump(hour: f64, centre: f64, width: f64) -> f64 {
    let z = (hour - centre) / width;
    (-0.5 * z * z).exp()
}

fn normalise(values: &mut [f64], target: f64) {
    let sum: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v *= target / sum);
}

fn synth_pv(weather: &Weather) -> Vec<f64> {
    let latitude = 51.0f64.to_radians();
    let mut pv: Vec<f64> = (0..STEPS_PER_YEAR)
        .map(|t| {
            let d = day_of(t);
            let declination =
                23.44f64.to_radians() * (2.0 * std::f64::consts::PI * (284.0 + d as f64 + 1.0) / 365.0).sin();
            let hour_angle = (15.0 * (hour_of(t) - 12.5)).to_radians();
            let sin_elev = latitude.sin() * declination.sin()
                + latitude.cos() * declination.cos() * hour_angle.cos();
            if sin_elev <= 0.0 {
                return 0.0;
            }
            // Intra-day flicker keeps partially cloudy days uneven.
            let flicker = 1.0 + 0.15 * ((t as f64) * 0.37).sin() * (1.0 - weather.clearness[d]);
            sin_elev.powf(1.2) * weather.clearness[d] * flicker
        })
        .collect();
    normalise(&mut pv, SYNTH_PV_YIELD_PER_M2);
    pv
}

fn synth_spot(seed: u64, weather: &Weather) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1_000);
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let days = STEPS_PER_YEAR / STEPS_PER_DAY;
    let mut level = 0.0;
    let mut prices = Vec::with_capacity(STEPS_PER_YEAR);
    for d in 0..days {
        level = 0.7 * level + 4.0 * noise.sample(&mut rng);
        let winter = (2.0 * std::f64::consts::PI * (d as f64 - 10.0) / 365.0).cos();
        for s in 0..STEPS_PER_DAY {
            let t = d * STEPS_PER_DAY + s;
            let h = hour_of(t);
            let weekend = is_weekend(t);
            let peak_scale = if weekend { 0.55 } else { 1.0 };
            // €/MWh
            let mut p = 24.0 + 3.0 * winter + level;
            p += peak_scale * (14.0 * bump(h, 8.5, 1.3) + 20.0 * bump(h, 19.0, 1.6));
            p += 6.0 * bump(h, 12.5, 3.5);
            // Solar infeed depresses midday prices on clear days.
            p -= 14.0 * weather.clearness[d] * (1.0 - winter) * 0.5 * bump(h, 13.0, 2.0);
            p -= 6.0 * bump(h, 3.5, 1.8);
            p += 2.5 * noise.sample(&mut rng);
            prices.push(p);
        }
    }
    let mean = prices.iter().sum::<f64>() / prices.len() as f64;
    let shift = SYNTH_SPOT_MEAN * 1_000.0 - mean;
    prices.iter().map(|p| (p + shift) / 1_000.0).collect()
}

fn synth_load(rng: &mut ChaCha8Rng, annual_target: f64) -> Vec<f64> {
    let morning = rng.gen_range(6.0..8.0);
    let evening = rng.gen_range(17.5..20.5);
    let evening_amp = rng.gen_range(1.1..1.8);
    let midday_amp = rng.gen_range(0.2..0.7);
    let base = rng.gen_range(0.25..0.45);
    let event_rate = rng.gen_range(0.015..0.035);
    let mut values = Vec::with_capacity(STEPS_PER_YEAR);
    for t in 0..STEPS_PER_YEAR {
        let d = day_of(t);
        let h = hour_of(t);
        let weekend = is_weekend(t);
        let shift = if weekend { 1.5 } else { 0.0 };
        let season = 1.0 + 0.18 * (2.0 * std::f64::consts::PI * (d as f64 - 15.0) / 365.0).cos();
        let awake = if (0.5..5.5).contains(&h) { 0.6 } else { 1.0 };
        let mut v = base * awake
            + 0.8 * bump(h, morning + shift, 0.9)
            + midday_amp * (if weekend { 1.6 } else { 1.0 }) * bump(h, 12.75, 1.2)
            + evening_amp * bump(h, evening, 1.4);
        v *= season * rng.gen_range(0.75..1.25);
        if rng.gen::<f64>() < event_rate * awake {
            v += rng.gen_range(0.8..2.5);
        }
        values.push(v);
    }
    normalise(&mut values, annual_target);
    values
}

fn synth_heat(rng: &mut ChaCha8Rng, weather: &Weather, annual_target: f64) -> Vec<f64> {
    let threshold = rng.gen_range(14.0..16.5);
    let hot_water_share = rng.gen_range(0.10..0.16);
    let morning = rng.gen_range(6.0..7.5);
    let evening = rng.gen_range(18.0..20.5);
    let setback = rng.gen_range(0.6..0.8);

    let mut space = Vec::with_capacity(STEPS_PER_YEAR);
    let mut water = Vec::with_capacity(STEPS_PER_YEAR);
    for t in 0..STEPS_PER_YEAR {
        let d = day_of(t);
        let h = hour_of(t);
        let degree = (threshold - weather.temperature[d]).max(0.0);
        let night = if !(5.5..=22.5).contains(&h) { setback } else { 1.0 };
        let shape = night + 0.35 * bump(h, morning, 1.2) + 0.2 * bump(h, evening, 1.5);
        space.push(degree * shape * rng.gen_range(0.9..1.1));
        water.push(0.15 + bump(h, morning + 0.5, 0.7) + 0.8 * bump(h, evening + 1.0, 0.9));
    }
    normalise(&mut space, annual_target * (1.0 - hot_water_share));
    normalise(&mut water, annual_target * hot_water_share);
    let mut heat: Vec<f64> = space.iter().zip(&water).map(|(a, b)| a + b).collect();
    cap_with_redistribution(&mut heat, SYNTH_HEAT_STEP_CAP);
    heat
}

/// Clips `values` at `cap` and spreads the clipped energy proportionally over
/// the remaining steps, preserving the total.
fn cap_with_redistribution(values: &mut [f64], cap: f64) {
    for _ in 0..100 {
        let excess: f64 = values.iter().map(|v| (v - cap).max(0.0)).sum();
        if excess <= 1e-12 {
            break;
        }
        values.iter_mut().for_each(|v| *v = v.min(cap));
        let room: f64 = values.iter().filter(|&&v| v < cap).copied().sum();
        for v in values.iter_mut().filter(|v| **v < cap) {
            *v += excess * *v / room;
        }
    }
}

/// Hour-of-day helper for report labels.
pub fn step_label(series: &QuarterHourSeries, step: usize) -> String {
    let ts = series.timestamp(step);
    format!("{:02}:{:02}", ts.hour(), ts.minute())
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use approx::assert_abs_diff_eq;

    use super::*;

    fn write_csv(rows: &[(String, f64)]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "timestamp,value").unwrap();
        for (ts, v) in rows {
            writeln!(f, "{ts},{v}").unwrap();
        }
        f
    }

    fn day_rows(n: usize) -> Vec<(String, f64)> {
        (0..n)
            .map(|i| {
                let ts = synth_start() + Duration::minutes(15 * i as i64);
                (ts.format(TIMESTAMP_FORMAT).to_string(), 0.1 + i as f64 * 1e-3)
            })
            .collect()
    }

    #[test]
    fn annual_file_loads_all_rows() {
        let f = write_csv(&day_rows(STEPS_PER_YEAR));
        let s = load_annual_series(f.path(), Unit::KwhEl).unwrap();
        assert_eq!(s.len(), STEPS_PER_YEAR);
        assert_eq!(s.step_minutes(), 15);
    }

    #[test]
    fn duplicated_timestamp_is_cadence_violation() {
        let mut rows = day_rows(96);
        rows[10].0 = rows[9].0.clone();
        let f = write_csv(&rows);
        let err = load_series(f.path(), Unit::KwhEl).unwrap_err().to_string();
        assert!(err.contains("cadence violation"), "{err}");
    }

    #[test]
    fn gap_and_reordering_rejected() {
        let mut rows = day_rows(96);
        rows.remove(5);
        rows.push(rows[0].clone());
        let f = write_csv(&rows);
        assert!(load_series(f.path(), Unit::KwhEl).is_err());

        let mut rows = day_rows(96);
        rows[4].0 = rows[2].0.clone();
        let f = write_csv(&rows);
        let err = load_series(f.path(), Unit::KwhEl).unwrap_err().to_string();
        assert!(err.contains("non-monotone"), "{err}");
    }

    #[test]
    fn negative_demand_rejected_but_prices_may_be_negative() {
        let mut rows = day_rows(96);
        rows[7].1 = -0.5;
        let f = write_csv(&rows);
        assert!(load_series(f.path(), Unit::KwhEl).is_err());
        assert!(load_series(f.path(), Unit::EurPerKwh).is_ok());
    }

    #[test]
    fn missing_file_and_short_annual_file() {
        let err = load_series("/nonexistent/x.csv", Unit::KwhEl).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        let f = write_csv(&day_rows(96 * 2));
        assert!(load_annual_series(f.path(), Unit::KwhEl).is_err());
        assert!(load_series(f.path(), Unit::KwhEl).is_ok());
    }

    #[test]
    fn household_load_in_reported_band_is_accepted() {
        let mut rows = day_rows(STEPS_PER_YEAR);
        let per_step = 3_600.0 / STEPS_PER_YEAR as f64;
        rows.iter_mut().for_each(|r| r.1 = per_step);
        let f = write_csv(&rows);
        let s = load_annual_series(f.path(), Unit::KwhEl).unwrap();
        assert!((LOAD_BAND.0..=LOAD_BAND.1).contains(&s.sum()));
    }

    #[test]
    fn split_examples() {
        let start = synth_start();
        let load = QuarterHourSeries::new(start, vec![1.0; 96], Unit::KwhEl).unwrap();

        let zero = split_shiftable(&load, 0.0, 4.0).unwrap();
        assert!(zero.shiftable.values().iter().all(|&v| v == 0.0));
        assert_eq!(zero.fixed.values(), load.values());

        let s = split_shiftable(&load, 0.4, 4.0).unwrap();
        assert_eq!(s.dr_window_steps, 16);
        assert_abs_diff_eq!(s.shiftable.values()[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(s.fixed.values()[0], 0.6, epsilon = 1e-15);

        assert!(split_shiftable(&load, 1.2, 4.0).is_err());
        assert!(split_shiftable(&load, -0.1, 4.0).is_err());
        assert!(split_shiftable(&load, 0.4, 0.0).is_err());
    }

    #[test]
    fn synthetic_bands_and_determinism() {
        let a = synth_profiles(1, 6).unwrap();
        assert_eq!(a.households.len(), 6);
        for p in &a.households {
            assert!(p.load.sum() > LOAD_BAND.0 && p.load.sum() < LOAD_BAND.1);
            assert!(p.heat.sum() > HEAT_BAND.0 && p.heat.sum() < HEAT_BAND.1);
            assert!(p.heat.values().iter().all(|&v| v <= SYNTH_HEAT_STEP_CAP + 1e-9));
        }
        assert_abs_diff_eq!(a.spot.mean(), SYNTH_SPOT_MEAN, epsilon = 1e-12);
        assert_abs_diff_eq!(a.pv_yield.sum(), SYNTH_PV_YIELD_PER_M2, epsilon = 1e-6);

        let b = synth_profiles(1, 6).unwrap();
        assert_eq!(a, b);
        let c = synth_profiles(2, 6).unwrap();
        assert_ne!(a.households[0].load, c.households[0].load);
        // heterogeneous across households
        assert_ne!(a.households[0].load.values(), a.households[1].load.values());
    }
}
