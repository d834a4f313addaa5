//! Minibatch training with early stopping on validation RMSE.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::model::{AnyModel, Forecaster, ModelError, ParamGroup};
use crate::series::{Dataset, SplitTag};
use crate::tensor::{Graph, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no training instances")]
    EmptyDataset,
    #[error("instance with target index {t} belongs to the test split")]
    Leakage { t: usize },
    #[error("non-finite training loss in epoch {epoch}; try a learning rate below {learning_rate}")]
    NonFiniteLoss { epoch: usize, learning_rate: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(format!("unknown optimizer {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping; 0 disables
    /// early stopping.
    pub patience: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Global gradient norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Parameter groups held fixed.
    pub frozen: Vec<ParamGroup>,
    /// Share of training instances, taken from the end, used for validation.
    pub validation_fraction: f64,
    /// Where `epoch-<k>.ckpt`, `best.ckpt` and `report.csv` go.
    pub run_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 200,
            learning_rate: 0.01,
            patience: 10,
            seed: 1,
            optimizer: OptimizerKind::Sgd,
            clip_norm: Some(5.0),
            frozen: Vec::new(),
            validation_fraction: 0.1,
            run_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(TrainError::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(TrainError::Config("validation_fraction must be in [0, 1)".into()));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(TrainError::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    NoImprovement,
    NothingToTrain,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::NoImprovement => "no_improvement",
            StopReason::NothingToTrain => "nothing_to_train",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean normalized squared error over the epoch's batches.
    pub train_loss: f64,
    /// Validation RMSE in flow units.
    pub val_rmse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Validation RMSE before the first update.
    pub initial_val_rmse: f64,
    /// Epoch whose parameters were kept; `None` means the initial ones.
    pub best_epoch: Option<usize>,
    pub stop: StopReason,
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn best_val_rmse(&self) -> f64 {
        match self.best_epoch {
            Some(e) => self.epochs[e - 1].val_rmse,
            None => self.initial_val_rmse,
        }
    }

    /// `epoch,train_loss,val_rmse` with one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_rmse\n");
        for e in &self.epochs {
            out += &format!("{},{},{}\n", e.epoch, e.train_loss, e.val_rmse);
        }
        out
    }
}

/// Shuffled partition of `0..len` into batches of at most `batch_size`.
pub fn epoch_batches(len: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    if len == 0 {
        return Err(TrainError::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(TrainError::Config("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// A uniform sample without replacement of instance positions in `dataset`.
pub fn sample_batch(dataset: &Dataset, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    Ok(epoch_batches(dataset.len(), batch_size, rng)?.swap_remove(0))
}

/// Seeded initialization of every parameter of `model`.
pub fn init_params(model: &mut AnyModel, seed: u64) {
    model.as_forecaster_mut().init_params(seed);
}

enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, step: i32, m: Vec<Vec<f64>>, v: Vec<Vec<f64>> },
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(kind: OptimizerKind, lr: f64, params: &[&Tensor]) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                step: 0,
                m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
                v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            },
        }
    }

    fn update(&mut self, params: &mut [&mut Tensor], grads: &[Option<Vec<f64>>]) {
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    if let Some(g) = g {
                        for (w, d) in p.data_mut().iter_mut().zip(g) {
                            *w -= *lr * d;
                        }
                    }
                }
            }
            Optimizer::Adam { lr, step, m, v } => {
                *step += 1;
                let c1 = 1.0 - Self::BETA1.powi(*step);
                let c2 = 1.0 - Self::BETA2.powi(*step);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let Some(g) = g else { continue };
                    for (j, (w, d)) in p.data_mut().iter_mut().zip(g).enumerate() {
                        m[i][j] = Self::BETA1 * m[i][j] + (1.0 - Self::BETA1) * d;
                        v[i][j] = Self::BETA2 * v[i][j] + (1.0 - Self::BETA2) * d * d;
                        *w -= *lr * (m[i][j] / c1) / ((v[i][j] / c2).sqrt() + Self::EPS);
                    }
                }
            }
        }
    }
}

/// De-normalized RMSE of `model` over the targets of `dataset`.
pub fn dataset_rmse(model: &dyn Forecaster, dataset: &Dataset) -> Result<f64> {
    let frames = dataset.normalized_frames();
    let ts: Vec<usize> = dataset.instances().iter().map(|i| i.t).collect();
    if ts.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let preds = model.predict(frames, &ts)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&t, p) in ts.iter().zip(&preds) {
        for (a, b) in frames[t].iter().zip(p) {
            sum += (a - b) * (a - b);
            count += 1;
        }
    }
    Ok((sum / count as f64).sqrt() * dataset.normalizer().scale())
}

fn snapshot(model: &dyn Forecaster) -> Vec<Tensor> {
    model.parameters().into_iter().cloned().collect()
}

fn restore(model: &mut dyn Forecaster, saved: &[Tensor]) {
    for (p, s) in model.parameters_mut().into_iter().zip(saved) {
        *p = s.clone();
    }
}

/// Trains `model` on the non-test instances of `dataset`.
///
/// The last `validation_fraction` of instances (by time) are held out. After
/// every epoch the validation RMSE is measured; the best parameters seen,
/// including the initial ones, are restored at the end.
pub fn train(model: &mut AnyModel, dataset: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let started = Instant::now();
    if let Some(bad) = dataset.instances().iter().find(|i| i.tag == SplitTag::Test) {
        return Err(TrainError::Leakage { t: bad.t });
    }
    let usable = dataset.retain_from(model.as_forecaster().min_target());
    if usable.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let (train_set, val_set) = if config.validation_fraction > 0.0 {
        usable.split_tail(config.validation_fraction)
    } else {
        (usable.clone(), usable.with_instances(Vec::new()))
    };
    // Without a validation split the criterion falls back to training RMSE.
    let monitor = if val_set.is_empty() { &train_set } else { &val_set };

    let initial_val_rmse = dataset_rmse(model.as_forecaster(), monitor)?;
    let trainable = model
        .as_forecaster()
        .parameter_groups()
        .iter()
        .any(|g| !config.frozen.contains(g));
    if config.max_epochs == 0 || !trainable {
        return Ok(TrainReport {
            epochs: Vec::new(),
            initial_val_rmse,
            best_epoch: None,
            stop: StopReason::NothingToTrain,
            wall_time: started.elapsed(),
        });
    }
    if let Some(dir) = &config.run_dir {
        fs::create_dir_all(dir)?;
    }

    let frames = train_set.normalized_frames();
    let targets: Vec<usize> = train_set.instances().iter().map(|i| i.t).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, &model.as_forecaster().parameters());

    let mut best = (initial_val_rmse, None, snapshot(model.as_forecaster()));
    let mut epochs = Vec::new();
    let mut stale = 0;
    let mut stop = StopReason::MaxEpochs;
    for epoch in 1..=config.max_epochs {
        let mut loss_sum = 0.0;
        for batch in epoch_batches(targets.len(), config.batch_size, &mut rng)? {
            let ts: Vec<usize> = batch.iter().map(|&i| targets[i]).collect();
            let f = model.as_forecaster_mut();
            let mut g = Graph::new();
            let vars = f.bind(&mut g, &config.frozen);
            let non_finite = TrainError::NonFiniteLoss {
                epoch,
                learning_rate: config.learning_rate,
            };
            let loss_var = match f.batch_loss(&mut g, &vars, frames, &ts) {
                Err(ModelError::Tensor(TensorError::NonFinite { .. })) => return Err(non_finite),
                other => other?,
            };
            let loss = g.value(loss_var).item();
            if !loss.is_finite() {
                return Err(non_finite);
            }
            match g.backward(loss_var) {
                Err(TensorError::NonFinite { .. }) => return Err(non_finite),
                other => other.map_err(ModelError::from)?,
            }
            let mut grads: Vec<Option<Vec<f64>>> = vars
                .iter()
                .map(|&v| if g.requires_grad(v) { g.grad(v).map(Tensor::into_data) } else { None })
                .collect();
            if let Some(cap) = config.clip_norm {
                let norm = grads.iter().flatten().flatten().map(|d| d * d).sum::<f64>().sqrt();
                if norm > cap {
                    let s = cap / norm;
                    grads.iter_mut().flatten().flatten().for_each(|d| *d *= s);
                }
            }
            optimizer.update(&mut f.parameters_mut(), &grads);
            loss_sum += loss * ts.len() as f64;
        }
        let val_rmse = dataset_rmse(model.as_forecaster(), monitor)?;
        if !val_rmse.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                learning_rate: config.learning_rate,
            });
        }
        epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / targets.len() as f64,
            val_rmse,
        });
        if let Some(dir) = &config.run_dir {
            Checkpoint::new(model.clone(), *dataset.normalizer()).save(&dir.join(format!("epoch-{epoch}.ckpt")))?;
        }
        if val_rmse < best.0 {
            best = (val_rmse, Some(epoch), snapshot(model.as_forecaster()));
            stale = 0;
        } else {
            stale += 1;
            if config.patience > 0 && stale >= config.patience {
                stop = StopReason::NoImprovement;
                break;
            }
        }
    }
    restore(model.as_forecaster_mut(), &best.2);
    let report = TrainReport {
        epochs,
        initial_val_rmse,
        best_epoch: best.1,
        stop,
        wall_time: started.elapsed(),
    };
    if let Some(dir) = &config.run_dir {
        write_run_outputs(dir, model, dataset, &report)?;
    }
    Ok(report)
}

fn write_run_outputs(dir: &Path, model: &AnyModel, dataset: &Dataset, report: &TrainReport) -> Result<()> {
    Checkpoint::new(model.clone(), *dataset.normalizer()).save(&dir.join("best.ckpt"))?;
    fs::write(dir.join("report.csv"), report.to_csv())?;
    Ok(())
}
