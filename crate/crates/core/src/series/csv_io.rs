use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use super::{DataError, FlowSeries, Result, RoadGridMap};

pub const FLOW_HEADER: &str = "timestamp,road_id,flow";
pub const GRIDMAP_HEADER: &str = "road_id,row,col";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DataError::Io {
            path: "<csv>".into(),
            source,
        },
        other => DataError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn reader<R: Read>(input: R, header: &str) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let found: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if found.is_empty() || (found.len() == 1 && found[0].is_empty()) {
        return Err(DataError::NoObservations);
    }
    if found.join(",") != header {
        return Err(DataError::Parse {
            line: 1,
            message: format!("expected header {header:?}, found {:?}", found.join(",")),
        });
    }
    Ok(rdr)
}

pub(crate) fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

impl RoadGridMap {
    /// Reads `road_id,row,col`; the grid extends to the largest row and column.
    pub fn from_reader<R: Read>(input: R) -> Result<Self> {
        let mut rdr = reader(input, GRIDMAP_HEADER).map_err(|e| match e {
            DataError::NoObservations => DataError::GridMap("empty grid map".into()),
            other => other,
        })?;
        let mut roads = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(csv_err)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let parse = |i: usize, what: &str| -> Result<usize> {
                record[i].parse().map_err(|_| DataError::Parse {
                    line,
                    message: format!("{what} must be a non-negative integer, got {:?}", &record[i]),
                })
            };
            roads.push((record[0].to_string(), parse(1, "row")?, parse(2, "col")?));
        }
        if roads.is_empty() {
            return Err(DataError::GridMap("empty grid map".into()));
        }
        let rows = roads.iter().map(|r| r.1).max().unwrap() + 1;
        let cols = roads.iter().map(|r| r.2).max().unwrap() + 1;
        RoadGridMap::new(rows, cols, roads)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::from_reader(File::open(path).map_err(io_err(path))?)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
        writeln!(out, "{GRIDMAP_HEADER}").map_err(io_err(path))?;
        for (id, r, c) in self.roads() {
            writeln!(out, "{id},{r},{c}").map_err(io_err(path))?;
        }
        out.flush().map_err(io_err(path))
    }
}

/// Loads a `timestamp,road_id,flow` file onto the grid described by `map`.
///
/// Rows must be in non-decreasing time order and aligned to the interval
/// grid that starts at the first timestamp. Roads sharing a cell are summed.
/// Missing (road, interval) pairs carry the road's last observation forward
/// (leading gaps take its first observation) and are flagged in the mask.
pub fn load_csv(path: &Path, map: &RoadGridMap, interval_minutes: u32) -> Result<FlowSeries> {
    load_flows(File::open(path).map_err(io_err(path))?, map, interval_minutes)
}

pub fn load_flows<R: Read>(input: R, map: &RoadGridMap, interval_minutes: u32) -> Result<FlowSeries> {
    if interval_minutes == 0 {
        return Err(DataError::InvalidSeries("interval must be positive".into()));
    }
    let step = interval_minutes as i64 * 60;
    let mut rdr = reader(input, FLOW_HEADER)?;
    let mut start: Option<i64> = None;
    let mut last_ts = i64::MIN;
    // per road: interval index -> flow
    let mut observed: Vec<Vec<Option<f64>>> = vec![Vec::new(); map.road_count()];
    let road_slot: HashMap<&str, usize> = map.roads().iter().enumerate().map(|(i, r)| (r.0.as_str(), i)).collect();

    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(DataError::Parse {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let ts_text = &record[0];
        let ts = DateTime::parse_from_rfc3339(ts_text)
            .map_err(|e| DataError::Parse {
                line,
                message: format!("bad timestamp {ts_text:?}: {e}"),
            })?
            .with_timezone(&Utc)
            .timestamp();
        let road = &record[1];
        let slot = *road_slot.get(road).ok_or_else(|| DataError::UnknownRoad {
            line,
            road: road.to_string(),
        })?;
        let flow: i64 = record[2].parse().map_err(|_| DataError::Parse {
            line,
            message: format!("flow must be a non-negative integer, got {:?}", &record[2]),
        })?;
        if flow < 0 {
            return Err(DataError::NegativeFlow { line, value: flow });
        }
        if ts < last_ts {
            return Err(DataError::OutOfOrder {
                line,
                timestamp: ts_text.to_string(),
            });
        }
        last_ts = ts;
        let origin = *start.get_or_insert(ts);
        if (ts - origin) % step != 0 {
            return Err(DataError::Misaligned {
                line,
                timestamp: ts_text.to_string(),
                interval: interval_minutes,
            });
        }
        let t = ((ts - origin) / step) as usize;
        let series = &mut observed[slot];
        if series.len() <= t {
            series.resize(t + 1, None);
        }
        if series[t].replace(flow as f64).is_some() {
            return Err(DataError::Duplicate {
                line,
                road: road.to_string(),
                timestamp: ts_text.to_string(),
            });
        }
    }

    let start = start.ok_or(DataError::NoObservations)?;
    let n = ((last_ts - start) / step) as usize + 1;
    let cells = map.cells();
    let mut frames = vec![vec![0.0; cells]; n];
    let mut filled = vec![vec![false; cells]; n];
    for ((id, _, _), series) in map.roads().iter().zip(&observed) {
        let cell = map.cell_of(id).expect("mapped road");
        let mut carry = series.iter().flatten().next().copied();
        for t in 0..n {
            let value = match series.get(t).copied().flatten() {
                Some(v) => {
                    carry = Some(v);
                    v
                }
                None => {
                    filled[t][cell] = true;
                    carry.unwrap_or(0.0)
                }
            };
            frames[t][cell] += value;
        }
    }
    FlowSeries::with_mask(interval_minutes, start, map.rows(), map.cols(), frames, filled)
}

/// Writes one row per (interval, road), time-major, roads in map order.
///
/// Requires a one-road-per-cell map so each road's flow is recoverable.
pub fn write_flow_csv(series: &FlowSeries, map: &RoadGridMap, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    write_flows(series, map, &mut out).map_err(|e| match e {
        DataError::Io { source, .. } => io_err(path)(source),
        other => other,
    })?;
    out.flush().map_err(io_err(path))
}

pub(crate) fn write_flows<W: Write>(series: &FlowSeries, map: &RoadGridMap, out: &mut W) -> Result<()> {
    if map.rows() != series.rows() || map.cols() != series.cols() {
        return Err(DataError::GridMap(format!(
            "map is {}x{} but series is {}x{}",
            map.rows(),
            map.cols(),
            series.rows(),
            series.cols()
        )));
    }
    if !map.is_injective() {
        return Err(DataError::GridMap("roads sharing a cell cannot be exported individually".into()));
    }
    let io = |source| DataError::Io {
        path: "<flows>".into(),
        source,
    };
    writeln!(out, "{FLOW_HEADER}").map_err(io)?;
    let cells: Vec<(usize, &str)> = map
        .roads()
        .iter()
        .map(|(id, r, c)| (r * map.cols() + c, id.as_str()))
        .collect();
    for t in 0..series.len() {
        let ts = format_timestamp(series.timestamp(t));
        let frame = series.frame(t);
        for &(cell, id) in &cells {
            let v = frame[cell];
            if v.fract() != 0.0 {
                return Err(DataError::InvalidSeries(format!("flow {v} at frame {t} is not an integer count")));
            }
            writeln!(out, "{ts},{id},{}", v as u64).map_err(io)?;
        }
    }
    Ok(())
}
