//! Forecasting models sharing one training and evaluation contract.

mod deeptfp;
mod lstm;
mod persistence;

pub use deeptfp::{ar_predict, fuse, ArHead, BoundBranch, Branch, ConvLayer, DeepTfp, FusionWeights, ModelConfig, ResidualUnit};
pub use lstm::{lstm_step, BoundGate, Gate, Lstm, LstmCell, LstmConfig};
pub use persistence::Persistence;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::series::WindowSpec;
use crate::tensor::{Graph, Tensor, TensorError, Var};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{branch} branch expects {expected} input frames, got {found}")]
    ChannelMismatch {
        branch: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("autoregressive head of order {expected} got {found} lagged outputs")]
    ShortHistory { expected: usize, found: usize },
    #[error("target index {t} needs {needed} frames of history")]
    InsufficientHistory { t: usize, needed: usize },
    #[error("target index {t} is beyond the {len} available frames")]
    MissingTarget { t: usize, len: usize },
    #[error("invalid model config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    DeepTfp,
    Lstm,
    Persistence,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::DeepTfp => "deeptfp",
            ModelKind::Lstm => "lstm",
            ModelKind::Persistence => "persistence",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "deeptfp" => Ok(ModelKind::DeepTfp),
            "lstm" => Ok(ModelKind::Lstm),
            "persistence" => Ok(ModelKind::Persistence),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

/// Coarse parameter grouping, used to freeze parts of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Closeness,
    Period,
    Trend,
    Fusion,
    ArHead,
    Recurrent,
    Readout,
}

impl FromStr for ParamGroup {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "closeness" => ParamGroup::Closeness,
            "period" => ParamGroup::Period,
            "trend" => ParamGroup::Trend,
            "fusion" => ParamGroup::Fusion,
            "ar" => ParamGroup::ArHead,
            "recurrent" => ParamGroup::Recurrent,
            "readout" => ParamGroup::Readout,
            other => return Err(format!("unknown parameter group {other:?}")),
        })
    }
}

impl ParamGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamGroup::Closeness => "closeness",
            ParamGroup::Period => "period",
            ParamGroup::Trend => "trend",
            ParamGroup::Fusion => "fusion",
            ParamGroup::ArHead => "ar",
            ParamGroup::Recurrent => "recurrent",
            ParamGroup::Readout => "readout",
        }
    }
}

/// A one-step-ahead grid forecaster over normalized frames.
///
/// Parameters are exposed as an ordered list; `forward` receives them as
/// graph variables in the same order.
pub trait Forecaster {
    fn kind(&self) -> ModelKind;

    /// Grid `(rows, cols)`.
    fn grid(&self) -> (usize, usize);

    fn window_spec(&self) -> &WindowSpec;

    /// Deterministic parameter initialization from `seed`.
    fn init_params(&mut self, seed: u64);

    fn parameters(&self) -> Vec<&Tensor>;

    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    /// Dotted names, one per parameter.
    fn parameter_names(&self) -> Vec<String>;

    fn parameter_groups(&self) -> Vec<ParamGroup>;

    /// Smallest target index whose inputs are all available.
    fn min_target(&self) -> usize;

    /// Predictions for targets `ts` as one `[B, rows, cols]` variable. Only
    /// frames strictly before each target are read.
    fn forward(&self, g: &mut Graph, params: &[Var], frames: &[Vec<f64>], ts: &[usize]) -> Result<Var>;

    /// Registers parameters on `g`; groups in `frozen` become constants.
    fn bind(&self, g: &mut Graph, frozen: &[ParamGroup]) -> Vec<Var> {
        self.parameters()
            .into_iter()
            .zip(self.parameter_groups())
            .map(|(p, group)| {
                if frozen.contains(&group) {
                    g.constant(p.clone())
                } else {
                    g.param(p.clone())
                }
            })
            .collect()
    }

    /// Mean squared error over a batch of targets.
    fn batch_loss(&self, g: &mut Graph, params: &[Var], frames: &[Vec<f64>], ts: &[usize]) -> Result<Var> {
        let pred = self.forward(g, params, frames, ts)?;
        let (rows, cols) = self.grid();
        let mut target = Vec::with_capacity(ts.len() * rows * cols);
        for &t in ts {
            let frame = frames.get(t).ok_or(ModelError::MissingTarget { t, len: frames.len() })?;
            target.extend_from_slice(frame);
        }
        let target = g.constant(Tensor::new(vec![ts.len(), rows, cols], target)?);
        Ok(g.mse_loss(pred, target)?)
    }

    /// Forward-only predictions, one flat grid per target.
    fn predict(&self, frames: &[Vec<f64>], ts: &[usize]) -> Result<Vec<Vec<f64>>> {
        const CHUNK: usize = 64;
        let mut out = Vec::with_capacity(ts.len());
        for chunk in ts.chunks(CHUNK) {
            let mut g = Graph::new();
            let params: Vec<Var> = self.parameters().into_iter().map(|p| g.constant(p.clone())).collect();
            let pred = self.forward(&mut g, &params, frames, chunk)?;
            let cells = self.grid().0 * self.grid().1;
            out.extend(g.value(pred).data().chunks(cells).map(<[f64]>::to_vec));
        }
        Ok(out)
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }
}

/// Checks that every target in `ts` has full history and at most one
/// frame beyond the available data.
pub(crate) fn check_targets(ts: &[usize], min_target: usize, frames: usize) -> Result<()> {
    for &t in ts {
        if t < min_target {
            return Err(ModelError::InsufficientHistory { t, needed: min_target });
        }
        if t > frames {
            return Err(ModelError::MissingTarget { t, len: frames });
        }
    }
    Ok(())
}

/// Stacks `frames[indices]` into a `[len, rows, cols]` tensor.
pub(crate) fn stack_frames(frames: &[Vec<f64>], indices: &[usize], rows: usize, cols: usize) -> Tensor {
    let mut data = Vec::with_capacity(indices.len() * rows * cols);
    for &i in indices {
        data.extend_from_slice(&frames[i]);
    }
    Tensor::new(vec![indices.len(), rows, cols], data).expect("frame stack shape")
}

/// Any supported model, for code that picks one at run time.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    DeepTfp(DeepTfp),
    Lstm(Lstm),
    Persistence(Persistence),
}

impl AnyModel {
    pub fn as_forecaster(&self) -> &dyn Forecaster {
        match self {
            AnyModel::DeepTfp(m) => m,
            AnyModel::Lstm(m) => m,
            AnyModel::Persistence(m) => m,
        }
    }

    pub fn as_forecaster_mut(&mut self) -> &mut dyn Forecaster {
        match self {
            AnyModel::DeepTfp(m) => m,
            AnyModel::Lstm(m) => m,
            AnyModel::Persistence(m) => m,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.as_forecaster().kind()
    }
}
