mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use deeptfp_core::checkpoint::Checkpoint;
use deeptfp_core::datagen::{export_csv, generate, GenError};
use deeptfp_core::eval::{emit_artifacts, run_experiment, EvalError, ExperimentConfig, Protocol};
use deeptfp_core::model::{AnyModel, DeepTfp, Lstm, LstmConfig, ModelError, ModelKind};
use deeptfp_core::series::{load_csv, DataError, Dataset, FlowSeries, RoadGridMap};
use deeptfp_core::trainer::{train, TrainError};
use log::info;
use thiserror::Error;

use config::{ConfigError, RunConfig};

const LOG_ENV: &str = "DEEPTFP_LOG";

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Training(String),
    #[error("{0}")]
    History(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Training(_) => 4,
            CliError::History(_) => 5,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InsufficientHistory { .. } => CliError::History(e.to_string()),
            ModelError::Config(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Config(e.to_string()),
            TrainError::EmptyDataset | TrainError::Leakage { .. } => CliError::Data(e.to_string()),
            TrainError::Model(m) => m.into(),
            other => CliError::Training(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Train(t) => t.into(),
            EvalError::Model(m) => m.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "deeptfp", version, about = "Citywide traffic-flow forecasting")]
#[command(after_help = "Exit codes: 0 ok, 2 config, 3 data, 4 training, 5 insufficient history.\nSet DEEPTFP_LOG=info (or debug) for progress logs.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        if let Some(seed) = self.seed {
            cfg.set("seed", &seed.to_string())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainableModel {
    Deeptfp,
    Lstm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    #[value(name = "4a")]
    TwoMonths,
    #[value(name = "4b")]
    OneMonth,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic city as flows.csv and gridmap.csv.
    #[command(after_help = RunConfig::keys_help())]
    Datagen {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes epoch-<k>.ckpt, best.ckpt and report.csv.
    #[command(after_help = RunConfig::keys_help())]
    Train {
        #[command(flatten)]
        common: Common,
        /// Flow CSV (`timestamp,road_id,flow`).
        #[arg(long)]
        data: PathBuf,
        /// Grid map CSV (`road_id,row,col`).
        #[arg(long)]
        gridmap: PathBuf,
        #[arg(long, value_enum, default_value = "deeptfp")]
        model: TrainableModel,
        /// Run directory.
        #[arg(long = "out-run")]
        out_run: PathBuf,
    },
    /// Predict the frame of one interval from the history before it.
    #[command(after_help = RunConfig::keys_help())]
    Predict {
        #[command(flatten)]
        common: Common,
        /// Run directory holding best.ckpt.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to gridmap.csv next to the data file.
        #[arg(long)]
        gridmap: Option<PathBuf>,
        /// Interval to predict, RFC 3339 (e.g. 2016-12-01T08:00:00Z).
        #[arg(long)]
        at: String,
        /// Write `road_id,flow` here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every model on earlier months and score them on the last month.
    #[command(after_help = RunConfig::keys_help())]
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to gridmap.csv next to the data file.
        #[arg(long)]
        gridmap: Option<PathBuf>,
        /// 4a: two training months; 4b: one.
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        /// Directory for report.csv, summary.csv, comparison.svg and runs/.
        #[arg(long)]
        out: PathBuf,
    },
}

fn gridmap_path(data: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| data.parent().unwrap_or(Path::new(".")).join("gridmap.csv"))
}

fn load_series(data: &Path, gridmap: &Path, interval: u32) -> Result<(FlowSeries, RoadGridMap), CliError> {
    let map = RoadGridMap::load_csv(gridmap)?;
    let series = load_csv(data, &map, interval)?;
    info!("loaded {} intervals on a {}x{} grid", series.len(), series.rows(), series.cols());
    Ok((series, map))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Datagen { common, out } => {
            let cfg = common.resolve()?;
            let city = generate(&cfg.city).map_err(|e| match e {
                GenError::Config { .. } => CliError::Config(e.to_string()),
                other => CliError::Data(other.to_string()),
            })?;
            let (flows, gridmap) = export_csv(&city.series, &city.map, &out).map_err(|e| CliError::Data(e.to_string()))?;
            println!("wrote {} and {}", flows.display(), gridmap.display());
        }
        Command::Train {
            common,
            data,
            gridmap,
            model,
            out_run,
        } => {
            let cfg = common.resolve()?;
            let (series, _) = load_series(&data, &gridmap, cfg.city.interval_minutes)?;
            let (rows, cols) = (series.rows(), series.cols());
            let dataset = Dataset::build(Arc::new(series), cfg.spec)?;
            let seed = cfg.city.seed;
            let mut m = match model {
                TrainableModel::Deeptfp => AnyModel::DeepTfp(DeepTfp::new(cfg.model, cfg.spec, rows, cols, seed)?),
                TrainableModel::Lstm => {
                    let lc = LstmConfig {
                        hidden: cfg.lstm_hidden,
                        ..LstmConfig::for_spec(&cfg.spec)
                    };
                    AnyModel::Lstm(Lstm::new(lc, cfg.spec, rows, cols, seed)?)
                }
            };
            let mut tc = cfg.train.clone();
            tc.run_dir = Some(out_run.clone());
            let report = train(&mut m, &dataset, &tc)?;
            println!(
                "trained {} for {} epochs ({}); best validation RMSE {:.4}; run in {}",
                m.kind(),
                report.epochs.len(),
                report.stop,
                report.best_val_rmse(),
                out_run.display()
            );
        }
        Command::Predict {
            common,
            run,
            data,
            gridmap,
            at,
            out,
        } => {
            let cfg = common.resolve()?;
            let ckpt = Checkpoint::load(&run.join("best.ckpt")).map_err(|e| CliError::Data(e.to_string()))?;
            let (series, map) = load_series(&data, &gridmap_path(&data, &gridmap), cfg.city.interval_minutes)?;
            let at: DateTime<Utc> = DateTime::parse_from_rfc3339(&at)
                .map_err(|e| CliError::Data(format!("bad --at timestamp {at:?}: {e}")))?
                .into();
            let t = if series.len() > 0 && at == series.timestamp(series.len() - 1) + chrono::Duration::seconds(series.interval_seconds()) {
                series.len()
            } else {
                series
                    .index_of(at)
                    .ok_or_else(|| CliError::Data(format!("{at} is not an interval of the series")))?
            };
            let model = ckpt.model.as_forecaster();
            if model.grid() != (series.rows(), series.cols()) {
                return Err(CliError::Data("checkpoint grid differs from the data grid".into()));
            }
            let norm = ckpt.normalizer;
            let frames: Vec<Vec<f64>> = series.frames()[..t].iter().map(|f| norm.transform_all(f)).collect();
            let pred = model.predict(&frames, &[t])?;
            let flows = norm.inverse_all(&pred[0]);
            let mut text = String::from("road_id,flow\n");
            for (id, r, c) in map.roads() {
                text += &format!("{id},{}\n", flows[r * map.cols() + c]);
            }
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|e| CliError::Data(e.to_string()))?,
                None => std::io::stdout()
                    .write_all(text.as_bytes())
                    .map_err(|e| CliError::Data(e.to_string()))?,
            }
        }
        Command::Experiment {
            common,
            data,
            gridmap,
            protocol,
            out,
        } => {
            let cfg = common.resolve()?;
            let (series, _) = load_series(&data, &gridmap_path(&data, &gridmap), cfg.city.interval_minutes)?;
            let exp = ExperimentConfig {
                protocol: match protocol {
                    ProtocolArg::TwoMonths => Protocol::TwoMonths,
                    ProtocolArg::OneMonth => Protocol::OneMonth,
                },
                spec: cfg.spec,
                model: cfg.model,
                lstm_hidden: cfg.lstm_hidden,
                train: cfg.train.clone(),
                init_seed: cfg.city.seed,
                models: vec![ModelKind::DeepTfp, ModelKind::Lstm, ModelKind::Persistence],
                run_root: Some(out.join("runs")),
            };
            let report = run_experiment(Arc::new(series), &exp)?;
            emit_artifacts(&report, &out)?;
            print!("{}", report.summary_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
