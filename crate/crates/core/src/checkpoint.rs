//! Versioned text checkpoints. Every float is stored as the hex of its bit
//! pattern, so a save/load cycle is exact.
//!
//! ```text
//! deeptfp-checkpoint 1
//! kind deeptfp
//! grid 16 16
//! window 3 2 2 96 672
//! config features=8 residual_units=2 kernel_size=3 ar_lags=3
//! normalizer <min> <max>
//! param closeness.input.kernel 8,3,3,3
//! <values>
//! ...
//! end
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::model::{AnyModel, DeepTfp, Lstm, LstmConfig, ModelConfig, ModelError, ModelKind, Persistence};
use crate::series::{Normalizer, WindowSpec};

const MAGIC: &str = "deeptfp-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

/// A model plus the normalizer its inputs were scaled with.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: AnyModel,
    pub normalizer: Normalizer,
}

fn bits(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

impl Checkpoint {
    pub fn new(model: AnyModel, normalizer: Normalizer) -> Self {
        Checkpoint { model, normalizer }
    }

    pub fn to_text(&self) -> String {
        let f = self.model.as_forecaster();
        let (rows, cols) = f.grid();
        let w = f.window_spec();
        let mut out = format!("{MAGIC} {VERSION}\nkind {}\ngrid {rows} {cols}\n", f.kind());
        out += &format!(
            "window {} {} {} {} {}\n",
            w.closeness, w.period_len, w.trend_len, w.period, w.trend
        );
        match &self.model {
            AnyModel::DeepTfp(m) => {
                let c = m.config();
                out += &format!(
                    "config features={} residual_units={} kernel_size={} ar_lags={}\n",
                    c.features, c.residual_units, c.kernel_size, c.ar_lags
                );
            }
            AnyModel::Lstm(m) => {
                let c = m.config();
                out += &format!("config hidden={} window={}\n", c.hidden, c.window);
            }
            AnyModel::Persistence(_) => out += "config\n",
        }
        out += &format!(
            "normalizer {} {}\n",
            bits(self.normalizer.min()),
            bits(self.normalizer.max())
        );
        for (name, p) in f.parameter_names().iter().zip(f.parameters()) {
            let shape: Vec<String> = p.shape().iter().map(usize::to_string).collect();
            out += &format!("param {name} {}\n", shape.join(","));
            let values: Vec<String> = p.data().iter().map(|&v| bits(v)).collect();
            out += &values.join(" ");
            out.push('\n');
        }
        out += "end\n";
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| CheckpointError::Format {
                line: 0,
                msg: format!("unexpected end of file, expected {what}"),
            })
        };
        let bad = |line: usize, msg: String| CheckpointError::Format { line, msg };

        let (n, header) = next("header")?;
        let version = header
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| bad(n, "not a checkpoint file".into()))?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }

        let (n, line) = next("kind")?;
        let kind: ModelKind = field(line, "kind")
            .ok_or_else(|| bad(n, "expected `kind`".into()))?
            .parse()
            .map_err(|e| bad(n, e))?;

        let (n, line) = next("grid")?;
        let grid = numbers(field(line, "grid").ok_or_else(|| bad(n, "expected `grid`".into()))?, n)?;
        let [rows, cols] = grid[..] else {
            return Err(bad(n, "grid needs two numbers".into()));
        };

        let (n, line) = next("window")?;
        let win = numbers(field(line, "window").ok_or_else(|| bad(n, "expected `window`".into()))?, n)?;
        let [closeness, period_len, trend_len, period, trend] = win[..] else {
            return Err(bad(n, "window needs five numbers".into()));
        };
        let spec = WindowSpec {
            closeness,
            period_len,
            trend_len,
            period,
            trend,
        };

        let (n, line) = next("config")?;
        let cfg = field(line, "config").ok_or_else(|| bad(n, "expected `config`".into()))?;
        let mut cfg: BTreeMap<&str, usize> = cfg
            .split_whitespace()
            .map(|kv| {
                let (k, v) = kv.split_once('=').ok_or_else(|| bad(n, format!("bad config entry {kv:?}")))?;
                let v = v.parse().map_err(|_| bad(n, format!("bad value in {kv:?}")))?;
                Ok((k, v))
            })
            .collect::<Result<_>>()?;
        let mut take = |k: &str| cfg.remove(k).ok_or_else(|| bad(n, format!("missing config key {k}")));

        let mut model = match kind {
            ModelKind::DeepTfp => {
                let c = ModelConfig {
                    features: take("features")?,
                    residual_units: take("residual_units")?,
                    kernel_size: take("kernel_size")?,
                    ar_lags: take("ar_lags")?,
                };
                AnyModel::DeepTfp(DeepTfp::zeros(c, spec, rows, cols)?)
            }
            ModelKind::Lstm => {
                let c = LstmConfig {
                    hidden: take("hidden")?,
                    window: take("window")?,
                };
                AnyModel::Lstm(Lstm::zeros(c, spec, rows, cols)?)
            }
            ModelKind::Persistence => AnyModel::Persistence(Persistence::new(spec, rows, cols)),
        };
        if let Some(k) = cfg.keys().next() {
            return Err(bad(n, format!("unknown config key {k}")));
        }

        let (n, line) = next("normalizer")?;
        let norm = field(line, "normalizer").ok_or_else(|| bad(n, "expected `normalizer`".into()))?;
        let norm: Vec<f64> = norm.split_whitespace().map(|s| from_bits(s, n)).collect::<Result<_>>()?;
        let [min, max] = norm[..] else {
            return Err(bad(n, "normalizer needs two values".into()));
        };
        let normalizer = Normalizer::new(min, max).map_err(|e| bad(n, e.to_string()))?;

        let f = model.as_forecaster_mut();
        let names = f.parameter_names();
        for (name, p) in names.iter().zip(f.parameters_mut()) {
            let (n, line) = next("param")?;
            let rest = field(line, "param").ok_or_else(|| bad(n, format!("expected parameter {name}")))?;
            let (got, shape) = rest.split_once(' ').unwrap_or((rest, ""));
            if got != name {
                return Err(bad(n, format!("expected parameter {name}, found {got}")));
            }
            let shape: Vec<usize> = if shape.is_empty() {
                Vec::new()
            } else {
                shape
                    .split(',')
                    .map(|s| s.parse().map_err(|_| bad(n, format!("bad shape {shape:?}"))))
                    .collect::<Result<_>>()?
            };
            if shape != p.shape() {
                return Err(bad(n, format!("{name} has shape {:?}, expected {:?}", shape, p.shape())));
            }
            let (n, line) = next("values")?;
            let values: Vec<f64> = line.split_whitespace().map(|s| from_bits(s, n)).collect::<Result<_>>()?;
            if values.len() != p.len() {
                return Err(bad(n, format!("{name} has {} values, expected {}", values.len(), p.len())));
            }
            p.data_mut().copy_from_slice(&values);
        }
        let (n, line) = next("end")?;
        if line.trim() != "end" {
            return Err(bad(n, "expected `end`".into()));
        }
        Ok(Checkpoint { model, normalizer })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

fn field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(key)?;
    if rest.is_empty() {
        Some("")
    } else {
        rest.strip_prefix(' ')
    }
}

fn numbers(s: &str, line: usize) -> Result<Vec<usize>> {
    s.split_whitespace()
        .map(|v| {
            v.parse().map_err(|_| CheckpointError::Format {
                line,
                msg: format!("bad number {v:?}"),
            })
        })
        .collect()
}

fn from_bits(s: &str, line: usize) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| CheckpointError::Format {
            line,
            msg: format!("bad value {s:?}"),
        })
}
