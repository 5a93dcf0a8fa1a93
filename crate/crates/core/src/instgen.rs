//! Seeded instance generators.
//!
//! Each random parameter has its own ChaCha8 stream derived from the master
//! seed (`set_stream`), so changing one dimension leaves the others intact.

use chrono::{Duration, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{BatteryError, ChargingFunction, PiecewiseLinear, WearDensityFunction};
use crate::model::{Battery, Charger, Instance, ModelError, Operation, Vehicle};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Battery(#[from] BatteryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("price CSV: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, GenError>;

const STREAM_PRICES: u64 = 1;
const STREAM_WDF: u64 = 2;
const STREAM_CHARGERS: u64 = 3;
/// Vehicle `k` draws its operations from stream `STREAM_VEHICLES + k`.
const STREAM_VEHICLES: u64 = 1000;

/// False for NaN as well.
fn positive(x: f64) -> bool {
    x > 0.0
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Convex,
    Concave,
}

/// Random PWL from the origin over `[0, nu]`: segment `i` spans `nu * w_i / sum w`
/// horizontally with a slope drawn from `[chi_min, chi_max]`; slopes are ordered
/// to give the requested curvature.
pub fn random_pwl<R: Rng>(
    n: usize,
    chi_min: f64,
    chi_max: f64,
    nu: f64,
    orientation: Orientation,
    rng: &mut R,
) -> Result<PiecewiseLinear> {
    if n == 0 || !positive(chi_min) || chi_min > chi_max || !positive(nu) {
        return Err(GenError::Params(format!("random_pwl(n={n}, chi=[{chi_min}, {chi_max}], nu={nu})")));
    }
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let mut slopes: Vec<f64> =
        (0..n).map(|_| if chi_max > chi_min { rng.gen_range(chi_min..chi_max) } else { chi_min }).collect();
    match orientation {
        Orientation::Convex => slopes.sort_by(f64::total_cmp),
        Orientation::Concave => slopes.sort_by(|a, b| b.total_cmp(a)),
    }
    let total: f64 = weights.iter().sum();
    let mut pts = vec![(0.0, 0.0)];
    let (mut x, mut y) = (0.0, 0.0);
    for (w, s) in weights.iter().zip(&slopes) {
        let dx = nu * w / total;
        x += dx;
        y += s * dx;
        pts.push((x, y));
    }
    pts.last_mut().expect("n >= 1").0 = nu;
    Ok(PiecewiseLinear::new(pts)?)
}

/// Charging function taking `minutes` to fill `q_max` from empty.
fn random_charger<R: Rng>(segments: usize, minutes: f64, q_max: f64, rng: &mut R) -> Result<ChargingFunction> {
    let raw = random_pwl(segments, 0.1, 0.8, minutes, Orientation::Concave, rng)?;
    let top = raw.last().1;
    Ok(ChargingFunction::new(PiecewiseLinear::new(raw.points().map(|(x, y)| (x, y * q_max / top)))?)?)
}

/// Full-charge durations (minutes) assigned to chargers in order.
pub const CHARGER_MINUTES: [f64; 6] = [150.0, 60.0, 90.0, 120.0, 75.0, 135.0];
pub const PERIOD_MINUTES: f64 = 30.0;
pub const PERIODS_PER_DAY: usize = 48;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkParams {
    pub fleet_size: usize,
    pub days: usize,
    /// Window length in periods.
    pub tw_length: usize,
    pub charger_count: usize,
    pub total_capacity: u32,
    pub wdf_segments: usize,
    pub phi_segments: usize,
    pub ops_per_day: usize,
    /// Operation durations are drawn from this range (periods, inclusive).
    pub duration_range: (usize, usize),
    /// Minimum garage time before each departure (periods).
    pub slack: usize,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        Self::base()
    }
}

impl BenchmarkParams {
    pub fn small() -> Self {
        Self {
            fleet_size: 3,
            days: 1,
            tw_length: 6,
            charger_count: 1,
            total_capacity: 1,
            wdf_segments: 3,
            phi_segments: 3,
            ops_per_day: 3,
            duration_range: (4, 8),
            slack: 2,
        }
    }

    pub fn base() -> Self {
        Self {
            fleet_size: 12,
            days: 2,
            tw_length: 4,
            charger_count: 2,
            total_capacity: 6,
            wdf_segments: 4,
            ..Self::small()
        }
    }
}

/// Uniform static departures with at least `slack` periods at the garage
/// before each, keeping the whole day's operations inside the day.
fn draw_day<R: Rng>(
    rng: &mut R,
    day_start: usize,
    day_len: usize,
    n_ops: usize,
    duration_range: (usize, usize),
    first_slack: usize,
    slack: usize,
) -> Result<Vec<(usize, usize)>> {
    let durations: Vec<usize> = (0..n_ops).map(|_| rng.gen_range(duration_range.0..=duration_range.1)).collect();
    let day_end = day_start + day_len;
    let mut out = Vec::with_capacity(n_ops);
    let mut free_from = day_start;
    for j in 0..n_ops {
        let s = if j == 0 { first_slack } else { slack };
        let lo = free_from + s;
        let rest: usize = durations[j + 1..].iter().map(|d| d + slack).sum();
        let hi = day_end
            .checked_sub(durations[j] + rest)
            .filter(|&h| h >= lo)
            .ok_or_else(|| GenError::Params(format!("{n_ops} operations do not fit in a day of {day_len} periods")))?;
        let dep = rng.gen_range(lo..=hi);
        out.push((dep, durations[j]));
        free_from = dep + durations[j];
    }
    Ok(out)
}

/// Window of total length `tw` centred on `static_dep`, clipped to the horizon.
fn window(static_dep: usize, duration: usize, tw: usize, n: usize) -> (usize, usize) {
    let half = tw / 2;
    let earliest = static_dep.saturating_sub(half);
    let latest = (static_dep + (tw - half)).min(n - duration);
    (earliest, latest.max(static_dep))
}

/// Instance of the benchmark families: 30-minute periods, prices in [0.5, 1],
/// 80 kWh battery starting full, operations consuming half the battery.
pub fn generate_benchmark(p: &BenchmarkParams, seed: u64) -> Result<Instance> {
    if p.fleet_size == 0 || p.days == 0 || p.charger_count == 0 || p.ops_per_day == 0 {
        return Err(GenError::Params("sizes must be positive".into()));
    }
    if (p.total_capacity as usize) < p.charger_count {
        return Err(GenError::Params("total capacity below charger count".into()));
    }
    if p.duration_range.0 == 0 || p.duration_range.0 > p.duration_range.1 {
        return Err(GenError::Params("bad duration range".into()));
    }
    if p.ops_per_day > 31 {
        return Err(GenError::Params("at most 31 operations per day".into()));
    }
    let q_max = 80.0;
    let n = p.days * PERIODS_PER_DAY;
    if p.tw_length >= n {
        return Err(GenError::Params("time window exceeds the horizon".into()));
    }
    let mut rng = stream(seed, STREAM_PRICES);
    let prices: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.0)).collect();
    let wdf = WearDensityFunction::new(random_pwl(
        p.wdf_segments,
        0.1,
        0.8,
        q_max,
        Orientation::Convex,
        &mut stream(seed, STREAM_WDF),
    )?)?;
    let mut rng = stream(seed, STREAM_CHARGERS);
    let mut chargers = Vec::with_capacity(p.charger_count);
    for f in 0..p.charger_count {
        let minutes = CHARGER_MINUTES[f % CHARGER_MINUTES.len()];
        let base = p.total_capacity / p.charger_count as u32;
        let extra = u32::from((f as u32) < p.total_capacity % p.charger_count as u32);
        chargers.push(Charger {
            id: format!("f{f}"),
            capacity: base + extra,
            phi: random_charger(p.phi_segments, minutes, q_max, &mut rng)?,
        });
    }
    let mut vehicles = Vec::with_capacity(p.fleet_size);
    for k in 0..p.fleet_size {
        let mut rng = stream(seed, STREAM_VEHICLES + k as u64);
        let mut operations = Vec::new();
        for d in 0..p.days {
            for (j, (dep, dur)) in draw_day(
                &mut rng,
                d * PERIODS_PER_DAY,
                PERIODS_PER_DAY,
                p.ops_per_day,
                p.duration_range,
                p.slack,
                p.slack,
            )?
            .into_iter()
            .enumerate()
            {
                let (earliest, latest) = window(dep, dur, p.tw_length, n);
                operations.push(Operation {
                    id: format!("d{d}o{j}"),
                    consumption: q_max / 2.0,
                    duration: dur,
                    earliest,
                    latest,
                });
            }
        }
        vehicles.push(Vehicle { id: format!("v{k}"), operations });
    }
    let inst = Instance {
        delta_p: PERIOD_MINUTES,
        prices,
        chargers,
        vehicles,
        battery: Battery { q_min: 0.0, q_max, initial: q_max },
        wdf,
    };
    inst.validate()?;
    Ok(inst)
}

/// Parameters of the small instances used for oracle comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TinyParams {
    pub vehicles: usize,
    pub periods: usize,
    pub capacity: u32,
    pub q_max: f64,
    pub max_ops: usize,
    /// All vehicles share operation timing (one stream), only consumption differs.
    pub shared_timing: bool,
}

impl Default for TinyParams {
    fn default() -> Self {
        Self { vehicles: 2, periods: 10, capacity: 1, q_max: 8.0, max_ops: 2, shared_timing: false }
    }
}

/// Random tiny instance: one charger, up to `max_ops` operations per vehicle
/// with random consumption, short windows, empty start.
pub fn generate_tiny(p: &TinyParams, seed: u64) -> Result<Instance> {
    if p.vehicles == 0 || p.periods < 3 || p.capacity == 0 || !positive(p.q_max) {
        return Err(GenError::Params("tiny parameters must be positive".into()));
    }
    let n = p.periods;
    let mut rng = stream(seed, STREAM_PRICES);
    let prices: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.0)).collect();
    let wdf = WearDensityFunction::new(random_pwl(
        2,
        0.05,
        0.3,
        p.q_max,
        Orientation::Convex,
        &mut stream(seed, STREAM_WDF),
    )?)?;
    let mut rng = stream(seed, STREAM_CHARGERS);
    let minutes = rng.gen_range(2.0..4.0);
    let phi = random_charger(2, minutes, p.q_max, &mut rng)?;
    let mut vehicles = Vec::with_capacity(p.vehicles);
    for k in 0..p.vehicles {
        let mut rng = stream(seed, STREAM_VEHICLES + k as u64);
        let mut timing = stream(seed, STREAM_VEHICLES + if p.shared_timing { 0 } else { k as u64 });
        let n_ops = timing.gen_range(1..=p.max_ops.max(1));
        let mut operations = Vec::new();
        let mut free_from = 2;
        for j in 0..n_ops {
            let duration = timing.gen_range(1..=2);
            if free_from + duration > n {
                break;
            }
            let dep = timing.gen_range(free_from..=(free_from + 2).min(n - duration));
            let latest = (dep + timing.gen_range(0..=2)).min(n - duration);
            let consumption = rng.gen_range(0.2..0.6) * p.q_max;
            operations.push(Operation { id: format!("o{j}"), consumption, duration, earliest: dep, latest });
            free_from = latest + duration + 1;
        }
        vehicles.push(Vehicle { id: format!("v{k}"), operations });
    }
    let inst = Instance {
        delta_p: 1.0,
        prices,
        chargers: vec![Charger { id: "f".into(), capacity: p.capacity, phi }],
        vehicles,
        battery: Battery { q_min: 0.0, q_max: p.q_max, initial: 0.0 },
        wdf,
    };
    inst.validate()?;
    Ok(inst)
}

/// Hourly (or finer) price series from `timestamp,price` rows.
pub fn read_price_csv(text: &str) -> Result<Vec<(NaiveDateTime, f64)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| GenError::Csv(e.to_string()))?;
        let (Some(ts), Some(price)) = (rec.get(0), rec.get(1)) else {
            return Err(GenError::Csv(format!("row {}: expected timestamp,price", i + 1)));
        };
        let t = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(ts, f).ok())
            .ok_or_else(|| GenError::Csv(format!("row {}: bad timestamp {ts:?}", i + 1)))?;
        let price: f64 = price.parse().map_err(|_| GenError::Csv(format!("row {}: bad price {price:?}", i + 1)))?;
        if let Some(&(prev, _)) = out.last() {
            if t <= prev {
                return Err(GenError::Csv(format!("row {}: timestamps must increase", i + 1)));
            }
        }
        out.push((t, price));
    }
    if out.len() < 2 {
        return Err(GenError::Csv("need at least two rows".into()));
    }
    Ok(out)
}

/// Linear interpolation of the series at `n` points spaced `step` from `start`.
pub fn interpolate_prices(
    series: &[(NaiveDateTime, f64)],
    start: NaiveDateTime,
    step: Duration,
    n: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let t = start + step * i as i32;
        while j + 1 < series.len() && series[j + 1].0 <= t {
            j += 1;
        }
        if t < series[0].0 || (j + 1 == series.len() && t > series[j].0) {
            return Err(GenError::Csv(format!("series does not cover {t}")));
        }
        if j + 1 == series.len() {
            out.push(series[j].1);
            continue;
        }
        let (t0, p0) = series[j];
        let (t1, p1) = series[j + 1];
        let w = (t - t0).num_seconds() as f64 / (t1 - t0).num_seconds() as f64;
        out.push(p0 + w * (p1 - p0));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseStudyParams {
    /// Total window length in hours, centred on the static departure.
    pub flexibility_hours: f64,
    pub fast_capacity: u32,
    pub vehicles: usize,
    pub days: usize,
}

impl Default for CaseStudyParams {
    fn default() -> Self {
        Self { flexibility_hours: 0.0, fast_capacity: 6, vehicles: 16, days: 2 }
    }
}

/// Fast DC charger of the case study (minutes, kWh).
pub fn casestudy_fast_charger() -> ChargingFunction {
    ChargingFunction::from_points(&[(0.0, 0.0), (72.32, 34.90), (92.6, 42.49), (120.0, 45.0)]).expect("valid")
}

pub fn casestudy_slow_charger() -> ChargingFunction {
    ChargingFunction::from_points(&[(0.0, 0.0), (435.0, 45.0)]).expect("valid")
}

/// Cumulative wear cost at quarter steps of a 45 kWh battery.
pub fn casestudy_wdf() -> WearDensityFunction {
    WearDensityFunction::from_points(&[(0.0, 0.0), (11.25, 1.59), (22.5, 3.30), (33.75, 5.20), (45.0, 7.79)])
        .expect("valid")
}

/// Case-study instance: three six-hour shifts of 15 kWh per vehicle and day,
/// horizon from 22:00 on the first day in the series, one slow charger per
/// vehicle plus a shared fast charger.
pub fn generate_casestudy(price_csv: &str, p: &CaseStudyParams, seed: u64) -> Result<Instance> {
    if p.vehicles == 0 || p.days == 0 || p.flexibility_hours < 0.0 {
        return Err(GenError::Params("case-study parameters must be positive".into()));
    }
    let series = read_price_csv(price_csv)?;
    let first = series[0].0;
    let mut start = first.date().and_hms_opt(22, 0, 0).expect("valid time");
    if start < first {
        start += Duration::days(1);
    }
    debug_assert_eq!(start.hour(), 22);
    let n = p.days * PERIODS_PER_DAY;
    let prices = interpolate_prices(&series, start, Duration::minutes(30), n)?;
    let tw = (p.flexibility_hours * 2.0).round() as usize;
    let mut vehicles = Vec::with_capacity(p.vehicles);
    for k in 0..p.vehicles {
        let mut rng = stream(seed, STREAM_VEHICLES + k as u64);
        let mut operations = Vec::new();
        for d in 0..p.days {
            let first_slack = if d == 0 { 4 } else { 2 };
            for (j, (dep, dur)) in
                draw_day(&mut rng, d * PERIODS_PER_DAY, PERIODS_PER_DAY, 3, (12, 12), first_slack, 2)?
                    .into_iter()
                    .enumerate()
            {
                let (earliest, latest) = window(dep, dur, tw, n);
                operations.push(Operation {
                    id: format!("d{d}s{j}"),
                    consumption: 15.0,
                    duration: dur,
                    earliest,
                    latest,
                });
            }
        }
        vehicles.push(Vehicle { id: format!("v{k}"), operations });
    }
    let inst = Instance {
        delta_p: PERIOD_MINUTES,
        prices,
        chargers: vec![
            Charger { id: "fast".into(), capacity: p.fast_capacity, phi: casestudy_fast_charger() },
            Charger { id: "slow".into(), capacity: p.vehicles as u32, phi: casestudy_slow_charger() },
        ],
        vehicles,
        battery: Battery { q_min: 0.0, q_max: 45.0, initial: 0.0 },
        wdf: casestudy_wdf(),
    };
    inst.validate()?;
    Ok(inst)
}
