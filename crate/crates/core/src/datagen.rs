//! Seeded synthetic city traffic with daily and weekly structure.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, Timelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::series::{write_flow_csv, DataError, FlowSeries, RoadGridMap, YearMonth};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid city config: {key}: {message}")]
    Config { key: &'static str, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot create {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GenError>;

#[derive(Clone, Debug, PartialEq)]
pub struct CityConfig {
    pub rows: usize,
    pub cols: usize,
    /// First full month generated.
    pub start: YearMonth,
    pub months: u32,
    /// Extra days before `start`, so that early targets have full history.
    pub warmup_days: u32,
    pub interval_minutes: u32,
    pub seed: u64,
    pub base_flow: f64,
    /// Height of the rush-hour peaks relative to the base level.
    pub daily_amplitude: f64,
    /// Fractional drop of weekend flows.
    pub weekend_damping: f64,
    /// Weight of one 4-neighbor smoothing step, in `[0, 0.25]`.
    pub diffusion: f64,
    /// Probability per cell and interval that an incident starts.
    pub incident_rate: f64,
    /// Fractional flow reduction during an incident.
    pub incident_magnitude: f64,
    /// Mean incident length in intervals (geometric).
    pub incident_duration: f64,
    /// Noise standard deviation relative to the clean flow.
    pub noise: f64,
}

impl Default for CityConfig {
    fn default() -> Self {
        CityConfig {
            rows: 16,
            cols: 16,
            start: YearMonth::new(2016, 10),
            months: 3,
            warmup_days: 15,
            interval_minutes: 15,
            seed: 1,
            base_flow: 100.0,
            daily_amplitude: 0.8,
            weekend_damping: 0.3,
            diffusion: 0.1,
            incident_rate: 0.0005,
            incident_magnitude: 0.5,
            incident_duration: 8.0,
            noise: 0.05,
        }
    }
}

impl CityConfig {
    /// 2501 roads on a 51×50 grid, the last cell unused.
    pub fn paper_scale() -> Self {
        CityConfig {
            rows: 51,
            cols: 50,
            ..CityConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key, message: &str| {
            Err(GenError::Config {
                key,
                message: message.to_string(),
            })
        };
        if self.rows == 0 || self.cols == 0 {
            return bad("rows", "grid must have at least one cell");
        }
        if self.months < 2 {
            return bad("months", "at least two months are needed for a train/test split");
        }
        if self.interval_minutes == 0 || 1440 % self.interval_minutes != 0 {
            return bad("interval_minutes", "must divide one day");
        }
        let magnitudes = [
            ("base_flow", self.base_flow),
            ("daily_amplitude", self.daily_amplitude),
            ("incident_rate", self.incident_rate),
            ("incident_magnitude", self.incident_magnitude),
            ("noise", self.noise),
        ];
        for (key, v) in magnitudes {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(key, "must be a non-negative number");
            }
        }
        if !(0.0..=1.0).contains(&self.weekend_damping) {
            return bad("weekend_damping", "must be in [0, 1]");
        }
        if !(0.0..=0.25).contains(&self.diffusion) {
            return bad("diffusion", "must be in [0, 0.25]");
        }
        if self.incident_rate > 1.0 {
            return bad("incident_rate", "must be a probability");
        }
        if self.incident_magnitude > 1.0 {
            return bad("incident_magnitude", "must be in [0, 1]");
        }
        if !(self.incident_duration >= 1.0) {
            return bad("incident_duration", "must be at least 1");
        }
        Ok(())
    }
}

fn bump(hour: f64, center: f64, width: f64) -> f64 {
    (-((hour - center) / width).powi(2)).exp()
}

/// Time-of-day factor: a night trough plus morning and evening rush hours.
/// `morning_share` in `[0, 1]` shifts weight between the two peaks.
pub fn daily_profile(hour: f64, amplitude: f64, morning_share: f64) -> f64 {
    let night = 0.6 * bump(hour, 3.0, 2.5);
    1.0 - night + amplitude * (2.0 * morning_share * bump(hour, 8.0, 1.5) + 2.0 * (1.0 - morning_share) * bump(hour, 17.5, 1.5))
}

pub fn weekly_profile(day: Weekday, damping: f64) -> f64 {
    match day {
        Weekday::Sat | Weekday::Sun => 1.0 - damping,
        _ => 1.0,
    }
}

/// A generated city and the per-cell traits behind it.
#[derive(Clone, Debug)]
pub struct City {
    pub series: FlowSeries,
    pub map: RoadGridMap,
    /// Multiplier on the base flow per cell.
    pub cell_factor: Vec<f64>,
    /// Share of the rush-hour weight in the morning peak, per cell.
    pub morning_share: Vec<f64>,
}

/// One smoothing step `x + κ·Δx` with reflecting borders; preserves the sum.
fn diffuse(field: &[f64], rows: usize, cols: usize, kappa: f64) -> Vec<f64> {
    if kappa == 0.0 {
        return field.to_vec();
    }
    let mut out = field.to_vec();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let mut lap = 0.0;
            for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols {
                    lap += field[nr as usize * cols + nc as usize] - field[i];
                }
            }
            out[i] += kappa * lap;
        }
    }
    out
}

pub fn generate(config: &CityConfig) -> Result<City> {
    config.validate()?;
    let (rows, cols) = (config.rows, config.cols);
    let cells = rows * cols;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let cell_factor: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.5..1.5)).collect();
    let morning_share: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.2..0.8)).collect();

    let start = config.start.start() - Duration::days(config.warmup_days as i64);
    let mut end = config.start;
    for _ in 0..config.months {
        end = end.next();
    }
    let step = Duration::minutes(config.interval_minutes as i64);
    let len = ((end.start() - start).num_minutes() / config.interval_minutes as i64) as usize;

    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let end_incident = 1.0 / config.incident_duration;
    let mut incident = vec![false; cells];
    let mut frames = Vec::with_capacity(len);
    let mut clean = vec![0.0; cells];
    for t in 0..len {
        let ts = start + step * t as i32;
        let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0;
        let week = weekly_profile(ts.weekday(), config.weekend_damping);
        for i in 0..cells {
            clean[i] = config.base_flow
                * cell_factor[i]
                * daily_profile(hour, config.daily_amplitude, morning_share[i])
                * week;
        }
        let smooth = diffuse(&clean, rows, cols, config.diffusion);
        let mut frame = Vec::with_capacity(cells);
        for i in 0..cells {
            if incident[i] {
                incident[i] = rng.gen::<f64>() >= end_incident;
            } else if config.incident_rate > 0.0 {
                incident[i] = rng.gen::<f64>() < config.incident_rate;
            }
            let mut v = smooth[i];
            if incident[i] {
                v *= 1.0 - config.incident_magnitude;
            }
            if config.noise > 0.0 {
                v += config.noise * smooth[i] * noise.sample(&mut rng);
            }
            frame.push(v.max(0.0).round());
        }
        frames.push(frame);
    }
    let series = FlowSeries::new(config.interval_minutes, start.timestamp(), rows, cols, frames)?;
    Ok(City {
        series,
        map: RoadGridMap::dense(rows, cols),
        cell_factor,
        morning_share,
    })
}

/// Writes `flows.csv` and `gridmap.csv` into `dir`, returning their paths.
pub fn export_csv(series: &FlowSeries, map: &RoadGridMap, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|source| GenError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let flows = dir.join("flows.csv");
    let gridmap = dir.join("gridmap.csv");
    write_flow_csv(series, map, &flows)?;
    map.write_csv(&gridmap)?;
    Ok((flows, gridmap))
}

/// Independent per-cell order-`k` autoregressions
/// `x_t = level + Σ coeffs[i]·(x_{t-1-i} - level) + noise`, started at `level`.
pub fn ar_series(
    rows: usize,
    cols: usize,
    len: usize,
    coeffs: &[f64],
    level: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<FlowSeries> {
    let cells = rows * cols;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd).map_err(|e| GenError::Config {
        key: "noise",
        message: e.to_string(),
    })?;
    let mut dev: Vec<Vec<f64>> = Vec::with_capacity(len);
    for t in 0..len {
        let frame = (0..cells)
            .map(|i| {
                let ar: f64 = coeffs
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k < t)
                    .map(|(k, a)| a * dev[t - 1 - k][i])
                    .sum();
                ar + noise.sample(&mut rng)
            })
            .collect();
        dev.push(frame);
    }
    let frames = dev
        .into_iter()
        .map(|f| f.into_iter().map(|d| (level + d).max(0.0)).collect())
        .collect();
    Ok(FlowSeries::new(15, 0, rows, cols, frames)?)
}
