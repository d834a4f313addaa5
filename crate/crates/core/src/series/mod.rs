//! Citywide flow series on a road grid, CSV ingestion, normalization and
//! construction of closeness/period/trend training instances.

mod csv_io;
mod instances;
mod normalize;

pub use csv_io::{load_csv, load_flows, write_flow_csv, FLOW_HEADER, GRIDMAP_HEADER};
pub use instances::{build_instances, split_by_month, Dataset, SplitTag, TrainingInstance, WindowSpec};
pub use normalize::Normalizer;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, TimeZone, Utc};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: unknown road_id {road:?}")]
    UnknownRoad { line: u64, road: String },
    #[error("line {line}: negative flow {value}")]
    NegativeFlow { line: u64, value: i64 },
    #[error("line {line}: timestamp {timestamp} is earlier than the previous row")]
    OutOfOrder { line: u64, timestamp: String },
    #[error("line {line}: duplicate observation for road {road:?} at {timestamp}")]
    Duplicate {
        line: u64,
        road: String,
        timestamp: String,
    },
    #[error("line {line}: timestamp {timestamp} is not aligned to the {interval}-minute grid")]
    Misaligned {
        line: u64,
        timestamp: String,
        interval: u32,
    },
    #[error("no observations")]
    NoObservations,
    #[error("grid map: {0}")]
    GridMap(String),
    #[error("invalid window spec: {0}")]
    InvalidWindow(String),
    #[error("series of {frames} frames is too short; the first target needs {needed} frames of history")]
    TooShort { frames: usize, needed: usize },
    #[error("month {0} is not covered by the series")]
    MonthNotFound(YearMonth),
    #[error("month {0} is used for both training and testing")]
    MonthOverlap(YearMonth),
    #[error("training month {train} is not before test month {test}")]
    TrainAfterTest { train: YearMonth, test: YearMonth },
    #[error("month {0} has no instance with complete history")]
    EmptySplit(YearMonth),
    #[error("normalizer needs max > min, got min={min} max={max}")]
    DegenerateRange { min: f64, max: f64 },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Calendar month in UTC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month out of range: {month}");
        YearMonth { year, month }
    }

    pub fn of(ts: DateTime<Utc>) -> Self {
        YearMonth::new(ts.year(), ts.month())
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            YearMonth::new(self.year + 1, 1)
        } else {
            YearMonth::new(self.year, self.month + 1)
        }
    }

    pub fn prev(self) -> Self {
        if self.month == 1 {
            YearMonth::new(self.year - 1, 12)
        } else {
            YearMonth::new(self.year, self.month - 1)
        }
    }

    pub fn start(self) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(self.year, self.month, 1, 0, 0, 0).unwrap()
    }

    pub fn days(self) -> u32 {
        (self.next().start() - self.start()).num_days() as u32
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (y, m) = s
            .trim()
            .split_once('-')
            .ok_or_else(|| format!("expected YYYY-MM, got {s:?}"))?;
        let year = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month: u32 = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        if !(1..=12).contains(&month) {
            return Err(format!("month out of range in {s:?}"));
        }
        Ok(YearMonth { year, month })
    }
}

/// Assignment of road identifiers to cells of a `rows×cols` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadGridMap {
    rows: usize,
    cols: usize,
    roads: Vec<(String, usize, usize)>,
    index: HashMap<String, usize>,
}

impl RoadGridMap {
    pub fn new(rows: usize, cols: usize, roads: Vec<(String, usize, usize)>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(DataError::GridMap("grid must have at least one cell".into()));
        }
        let mut index = HashMap::with_capacity(roads.len());
        for (i, (id, r, c)) in roads.iter().enumerate() {
            if *r >= rows || *c >= cols {
                return Err(DataError::GridMap(format!(
                    "road {id:?} at ({r},{c}) is outside the {rows}x{cols} grid"
                )));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(DataError::GridMap(format!("road {id:?} is listed twice")));
            }
        }
        Ok(RoadGridMap {
            rows,
            cols,
            roads,
            index,
        })
    }

    /// One road per cell, ids `R<row>_<col>`, in row-major order.
    pub fn dense(rows: usize, cols: usize) -> Self {
        let roads = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (format!("R{r:03}_{c:03}"), r, c)))
            .collect();
        RoadGridMap::new(rows, cols, roads).expect("dense grid is valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn road_count(&self) -> usize {
        self.roads.len()
    }

    pub fn roads(&self) -> &[(String, usize, usize)] {
        &self.roads
    }

    /// Flat cell index (`row * cols + col`) of a road.
    pub fn cell_of(&self, road: &str) -> Option<usize> {
        self.index.get(road).map(|&i| {
            let (_, r, c) = &self.roads[i];
            r * self.cols + c
        })
    }

    /// True when no two roads share a cell.
    pub fn is_injective(&self) -> bool {
        let mut seen = vec![false; self.cells()];
        self.roads.iter().all(|(_, r, c)| !std::mem::replace(&mut seen[r * self.cols + c], true))
    }
}

/// Gap-free sequence of grid frames at a fixed interval.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSeries {
    interval_minutes: u32,
    start: i64,
    rows: usize,
    cols: usize,
    frames: Vec<Vec<f64>>,
    filled: Vec<Vec<bool>>,
}

impl FlowSeries {
    pub fn new(interval_minutes: u32, start: i64, rows: usize, cols: usize, frames: Vec<Vec<f64>>) -> Result<Self> {
        let filled = vec![vec![false; rows * cols]; frames.len()];
        Self::with_mask(interval_minutes, start, rows, cols, frames, filled)
    }

    pub fn with_mask(
        interval_minutes: u32,
        start: i64,
        rows: usize,
        cols: usize,
        frames: Vec<Vec<f64>>,
        filled: Vec<Vec<bool>>,
    ) -> Result<Self> {
        if interval_minutes == 0 {
            return Err(DataError::InvalidSeries("interval must be positive".into()));
        }
        if frames.is_empty() {
            return Err(DataError::NoObservations);
        }
        let cells = rows * cols;
        if cells == 0 {
            return Err(DataError::InvalidSeries("grid must have at least one cell".into()));
        }
        if filled.len() != frames.len() {
            return Err(DataError::InvalidSeries("quality mask length differs from frame count".into()));
        }
        for (t, (frame, mask)) in frames.iter().zip(&filled).enumerate() {
            if frame.len() != cells || mask.len() != cells {
                return Err(DataError::InvalidSeries(format!("frame {t} does not match the {rows}x{cols} grid")));
            }
            if let Some(v) = frame.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(DataError::InvalidSeries(format!("frame {t} holds invalid flow {v}")));
            }
        }
        Ok(FlowSeries {
            interval_minutes,
            start,
            rows,
            cols,
            frames,
            filled,
        })
    }

    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    pub fn interval_seconds(&self) -> i64 {
        self.interval_minutes as i64 * 60
    }

    /// Start of the first interval, UTC epoch seconds.
    pub fn start_timestamp(&self) -> i64 {
        self.start
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t]
    }

    /// Cells whose value was filled in rather than observed.
    pub fn filled_mask(&self, t: usize) -> &[bool] {
        &self.filled[t]
    }

    pub fn timestamp(&self, t: usize) -> DateTime<Utc> {
        Utc.timestamp_opt(self.start + t as i64 * self.interval_seconds(), 0).unwrap()
    }

    pub fn month_of(&self, t: usize) -> YearMonth {
        YearMonth::of(self.timestamp(t))
    }

    /// Frame index of the interval starting exactly at `ts`.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let offset = ts.timestamp() - self.start;
        if offset < 0 || offset % self.interval_seconds() != 0 {
            return None;
        }
        let t = (offset / self.interval_seconds()) as usize;
        (t < self.len()).then_some(t)
    }

    /// Frame indices `[first, last]` falling in `month`, if any.
    pub fn month_range(&self, month: YearMonth) -> Option<(usize, usize)> {
        let step = self.interval_seconds();
        let lo = (month.start().timestamp() - self.start).max(0);
        let hi = month.next().start().timestamp() - self.start;
        let first = ((lo + step - 1) / step) as usize;
        if hi <= 0 || first >= self.len() {
            return None;
        }
        let last = (((hi - 1) / step) as usize).min(self.len() - 1);
        (first <= last).then_some((first, last))
    }

    /// Copy of the first `n` frames.
    pub fn truncated(&self, n: usize) -> FlowSeries {
        let n = n.min(self.len()).max(1);
        FlowSeries {
            interval_minutes: self.interval_minutes,
            start: self.start,
            rows: self.rows,
            cols: self.cols,
            frames: self.frames[..n].to_vec(),
            filled: self.filled[..n].to_vec(),
        }
    }
}
